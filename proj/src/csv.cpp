#include "mecal/csv.hpp"

#include "mecal/error.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>

namespace mecal::csv {

std::vector<std::string> split_row(std::string_view row, char delimiter, std::size_t line) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    bool field_was_quoted = false;
    for (std::size_t i = 0; i < row.size(); ++i) {
        const char c = row[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < row.size() && row[i + 1] == '"') {
                    current.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                current.push_back(c);
            }
        } else if (c == '"' && current.empty() && !field_was_quoted) {
            quoted = true;
            field_was_quoted = true;
        } else if (c == delimiter) {
            fields.push_back(std::move(current));
            current.clear();
            field_was_quoted = false;
        } else {
            current.push_back(c);
        }
    }
    if (quoted) {
        throw ParseError(line, "unterminated quoted field");
    }
    fields.push_back(std::move(current));
    return fields;
}

std::string escape(std::string_view field, char delimiter) {
    if (field.find_first_of(std::string{delimiter} + "\"\r\n") == std::string_view::npos) {
        return std::string(field);
    }
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

bool read_line(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        out << escape(fields[i]);
    }
    out << '\n';
}

bool parse_double(std::string_view token, double& out) {
    if (token.empty()) return false;
    // from_chars rejects a leading '+', which some writers emit.
    if (token.front() == '+') token.remove_prefix(1);
    const auto* first = token.data();
    const auto* last = token.data() + token.size();
    const auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last && std::isfinite(out);
}

} // namespace mecal::csv
