#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vulnmap {

// Raised for anything wrong with user-supplied data or configuration.
// Everything else escaping the library is an internal error.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A located problem inside an input file. `line` is 1-based; 0 means the
// problem is not tied to a single line (e.g. a missing CSV column).
class ParseError : public InputError {
 public:
  ParseError(std::string source, std::size_t line, std::string field,
             const std::string& message);

  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::string source_;
  std::size_t line_;
  std::string field_;
};

}  // namespace vulnmap
