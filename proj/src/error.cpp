#include "citecrit/error.hpp"

namespace citecrit {

std::string_view category_name(ErrorCategory category) {
    switch (category) {
        case ErrorCategory::usage: return "usage";
        case ErrorCategory::config: return "config";
        case ErrorCategory::parse: return "parse";
        case ErrorCategory::validation: return "validation";
        case ErrorCategory::io: return "io";
        case ErrorCategory::numeric: return "numeric";
        case ErrorCategory::separation: return "separation";
        case ErrorCategory::convergence: return "convergence";
        case ErrorCategory::transport: return "transport";
    }
    return "unknown";
}

int exit_code_for(ErrorCategory category) {
    switch (category) {
        case ErrorCategory::usage: return 2;
        case ErrorCategory::config: return 3;
        case ErrorCategory::parse: return 4;
        case ErrorCategory::validation: return 5;
        case ErrorCategory::io: return 6;
        case ErrorCategory::numeric: return 7;
        case ErrorCategory::separation: return 8;
        case ErrorCategory::convergence: return 9;
        case ErrorCategory::transport: return 10;
    }
    return 1;
}

ParseError::ParseError(std::size_t line, const std::string& message)
    : Error(ErrorCategory::parse, line > 0 ? "line " + std::to_string(line) + ": " + message : message),
      line_(line) {}

}  // namespace citecrit
