#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace citecrit::csv {

/// RFC 4180 quoting: fields containing a comma, quote, CR or LF are quoted.
std::string escape(std::string_view field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

/// Streaming reader. Quoted fields may span lines; `line()` reports the
/// 1-based line on which the last returned record started.
class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    std::optional<std::vector<std::string>> next();
    std::size_t line() const { return record_line_; }

private:
    std::istream& in_;
    std::size_t current_line_ = 1;
    std::size_t record_line_ = 0;
};

/// Formats a double with the shortest representation that round-trips.
std::string format_double(double value);

double parse_double(std::string_view field, std::size_t line, std::string_view column);
long long parse_int(std::string_view field, std::size_t line, std::string_view column);

}  // namespace citecrit::csv
