#ifndef MECAL_CSV_HPP
#define MECAL_CSV_HPP

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace mecal::csv {

/// Splits one record on `delimiter`, honouring RFC-4180 double-quoted fields.
/// Throws ParseError (with `line`) on an unterminated quote.
std::vector<std::string> split_row(std::string_view row, char delimiter, std::size_t line);

/// Quotes a field when it contains the delimiter, a quote, or a line break.
std::string escape(std::string_view field, char delimiter = ',');

/// Reads one line, dropping a trailing '\r'. Returns false at end of input.
bool read_line(std::istream& in, std::string& line);

/// Writes fields joined by commas and terminated by '\n'.
void write_row(std::ostream& out, const std::vector<std::string>& fields);

/// Strict finite double parse of the whole token. Returns false on failure.
bool parse_double(std::string_view token, double& out);

} // namespace mecal::csv

#endif
