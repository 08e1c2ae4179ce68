#pragma once

#include <stdexcept>
#include <string>

namespace emtune {

// Every failure raised by the library derives from Error so callers can
// separate library failures from std::bad_alloc and friends.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class DataError : public Error { using Error::Error; };
class FormatError : public Error { using Error::Error; };
class NumericError : public Error { using Error::Error; };
class StateError : public Error { using Error::Error; };
class IoError : public Error { using Error::Error; };
class DegenerateGeometryError : public Error { using Error::Error; };

/// Truncated or malformed binary input; carries the byte offset where
/// reading stopped.
class ParseError : public FormatError {
public:
  ParseError(const std::string& what, std::size_t offset)
      : FormatError(what + " (at byte offset " + std::to_string(offset) + ")"),
        detail_(what),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }
  // Message without the offset suffix.
  const std::string& detail() const noexcept { return detail_; }

private:
  std::string detail_;
  std::size_t offset_;
};

}  // namespace emtune
