#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <string>

namespace citecrit::net {

/// Endpoint of a JSON-over-HTTP service. `url` includes scheme, host,
/// optional port and path, e.g. "http://localhost:8080/v1/embed".
struct Endpoint {
    std::string url;
    std::string bearer_token;
    std::chrono::milliseconds timeout{30000};
};

/// Sends one JSON request body and returns the raw response body.
/// Implementations throw TransportError on any failure.
class JsonTransport {
public:
    virtual ~JsonTransport() = default;
    virtual std::string post(const std::string& body) const = 0;
};

/// JSON POST over HTTP or HTTPS. A fresh connection is used per request, so
/// one instance may serve concurrent callers.
class HttpJsonTransport final : public JsonTransport {
public:
    explicit HttpJsonTransport(Endpoint endpoint);
    std::string post(const std::string& body) const override;

private:
    Endpoint endpoint_;
    std::string origin_;
    std::string path_;
};

struct RetryPolicy {
    int max_attempts = 4;
    std::chrono::milliseconds initial_backoff{250};
    double backoff_factor = 2.0;
};

/// Runs `fn`, retrying on TransportError with exponential backoff. The last
/// failure is rethrown, prefixed with the attempt count.
std::string with_retries(const RetryPolicy& policy, const std::function<std::string()>& fn);

}  // namespace citecrit::net
