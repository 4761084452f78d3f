#pragma once

#include <stdexcept>
#include <string>

namespace hierloc {

/// Base class for every error raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Filesystem problems: missing files, unreadable streams, failed writes.
class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what) {}
};

/// Malformed file content. Carries line (text formats) or byte offset
/// (binary formats) when known; 0 means unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0, std::size_t offset = 0)
      : Error(format(what, line, offset)), line_(line), offset_(offset) {}

  std::size_t line() const { return line_; }
  std::size_t offset() const { return offset_; }

 private:
  static std::string format(const std::string& what, std::size_t line, std::size_t offset) {
    std::string s = what;
    if (line > 0) s += " (line " + std::to_string(line) + ")";
    if (offset > 0) s += " (offset " + std::to_string(offset) + ")";
    return s;
  }
  std::size_t line_;
  std::size_t offset_;
};

/// A parameter or precondition violation: invalid voxel size, bad depth,
/// dimension mismatch, non-rigid rotation and the like.
class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error(what) {}
};

/// The inputs were well-formed but the data cannot be processed: empty
/// clouds, duplicate ids, too few correspondences, degenerate geometry.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(what) {}
};

}  // namespace hierloc
