#include "citecrit/csv.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>

#include <fmt/format.h>

#include "citecrit/error.hpp"

namespace citecrit::csv {

std::string escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i > 0) out.put(',');
        out << escape(fields[i]);
    }
    out.put('\n');
}

std::optional<std::vector<std::string>> Reader::next() {
    std::vector<std::string> fields;
    std::string field;
    bool in_quotes = false;
    bool any = false;
    record_line_ = current_line_;
    int c = 0;
    while ((c = in_.get()) != std::char_traits<char>::eof()) {
        any = true;
        const char ch = static_cast<char>(c);
        if (in_quotes) {
            if (ch == '"') {
                if (in_.peek() == '"') {
                    in_.get();
                    field.push_back('"');
                } else {
                    in_quotes = false;
                }
            } else {
                if (ch == '\n') ++current_line_;
                field.push_back(ch);
            }
            continue;
        }
        if (ch == '"' && field.empty()) {
            in_quotes = true;
        } else if (ch == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (ch == '\n') {
            ++current_line_;
            fields.push_back(std::move(field));
            return fields;
        } else if (ch != '\r') {
            field.push_back(ch);
        }
    }
    if (in_quotes) throw ParseError(record_line_, "unterminated quoted field");
    if (!any) return std::nullopt;
    fields.push_back(std::move(field));
    return fields;
}

std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    return fmt::format("{}", value);
}

double parse_double(std::string_view field, std::size_t line, std::string_view column) {
    double value = 0.0;
    const auto* begin = field.data();
    const auto* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
        throw ParseError(line, "column " + std::string(column) + ": not a finite number: '" +
                                   std::string(field) + "'");
    }
    return value;
}

long long parse_int(std::string_view field, std::size_t line, std::string_view column) {
    long long value = 0;
    const auto* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(field.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        throw ParseError(line, "column " + std::string(column) + ": not an integer: '" +
                                   std::string(field) + "'");
    }
    return value;
}

}  // namespace citecrit::csv
