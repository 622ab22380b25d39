#include "citecrit/net.hpp"

#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "citecrit/error.hpp"

namespace citecrit::net {

HttpJsonTransport::HttpJsonTransport(Endpoint endpoint) : endpoint_(std::move(endpoint)) {
    const std::string& url = endpoint_.url;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ValidationError("endpoint url lacks a scheme: " + url);
    const std::string scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") {
        throw ValidationError("endpoint url must use http or https: " + url);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    origin_ = url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
}

std::string HttpJsonTransport::post(const std::string& body) const {
    httplib::Client client(origin_);
    const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(endpoint_.timeout);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(endpoint_.timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());
    httplib::Headers headers;
    if (!endpoint_.bearer_token.empty()) {
        headers.emplace("Authorization", "Bearer " + endpoint_.bearer_token);
    }
    const auto result = client.Post(path_, headers, body, "application/json");
    if (!result) {
        throw TransportError("POST " + endpoint_.url + " failed: " + httplib::to_string(result.error()));
    }
    if (result->status < 200 || result->status >= 300) {
        throw TransportError("POST " + endpoint_.url + " returned HTTP " + std::to_string(result->status));
    }
    return result->body;
}

std::string with_retries(const RetryPolicy& policy, const std::function<std::string()>& fn) {
    const int attempts = std::max(1, policy.max_attempts);
    auto backoff = policy.initial_backoff;
    for (int attempt = 1;; ++attempt) {
        try {
            return fn();
        } catch (const TransportError& e) {
            if (attempt >= attempts) {
                throw TransportError("giving up after " + std::to_string(attempt) + " attempts: " + e.what());
            }
            spdlog::warn("transport failure (attempt {}/{}): {}", attempt, attempts, e.what());
            std::this_thread::sleep_for(backoff);
            backoff = std::chrono::milliseconds(
                static_cast<long long>(static_cast<double>(backoff.count()) * policy.backoff_factor));
        }
    }
}

}  // namespace citecrit::net
