#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vulnmap::detail {

// Shortest decimal text that round-trips to the same double.
std::string format_double(double value);

std::optional<double> parse_double(std::string_view text);

std::string trim(std::string_view text);
std::string to_lower(std::string_view text);

// RFC 4180 field quoting: quotes only when needed.
std::string csv_escape(std::string_view field);
std::string csv_row(const std::vector<std::string>& fields);

// Streaming RFC 4180 reader. Accepts LF or CRLF line endings and quoted
// fields spanning lines; a UTF-8 byte order mark before the header is dropped.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in);

  // Reads the next record into `fields`. Returns false at end of input.
  // Blank lines are skipped. Throws std::runtime_error on an unterminated
  // quoted field.
  bool next(std::vector<std::string>& fields);

  // Physical line (1-based) on which the last record returned started.
  std::size_t line() const { return record_line_; }

 private:
  std::istream& in_;
  std::size_t current_line_ = 1;
  std::size_t record_line_ = 0;
  bool at_start_ = true;
};

}  // namespace vulnmap::detail
