#include "vulnmap/error.hpp"

namespace vulnmap {
namespace {

std::string locate(const std::string& source, std::size_t line,
                   const std::string& field, const std::string& message) {
  std::string out = source;
  if (line > 0) out += ":" + std::to_string(line);
  if (!field.empty()) out += ": field '" + field + "'";
  out += ": " + message;
  return out;
}

}  // namespace

ParseError::ParseError(std::string source, std::size_t line, std::string field,
                       const std::string& message)
    : InputError(locate(source, line, field, message)),
      source_(std::move(source)),
      line_(line),
      field_(std::move(field)) {}

}  // namespace vulnmap
