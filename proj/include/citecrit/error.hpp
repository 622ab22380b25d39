#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace citecrit {

/// Broad failure classes. The CLI maps each one to its own exit code and
/// prints the category name so scripts can branch on it.
enum class ErrorCategory {
    usage,
    config,
    parse,
    validation,
    io,
    numeric,
    separation,
    convergence,
    transport,
};

std::string_view category_name(ErrorCategory category);
int exit_code_for(ErrorCategory category);

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& message)
        : std::runtime_error(message), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

/// A malformed input record. `line` is 1-based; 0 when not line oriented.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& message);
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& message)
        : Error(ErrorCategory::validation, message) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error(ErrorCategory::io, message) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& message)
        : Error(ErrorCategory::numeric, message) {}
};

class SeparationError : public Error {
public:
    explicit SeparationError(const std::string& message)
        : Error(ErrorCategory::separation, message) {}
};

class ConvergenceError : public Error {
public:
    explicit ConvergenceError(const std::string& message)
        : Error(ErrorCategory::convergence, message) {}
};

/// Network or remote-service failure. Callers may retry these.
class TransportError : public Error {
public:
    explicit TransportError(const std::string& message)
        : Error(ErrorCategory::transport, message) {}
};

}  // namespace citecrit
