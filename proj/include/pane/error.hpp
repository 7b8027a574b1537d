#ifndef PANE_ERROR_HPP
#define PANE_ERROR_HPP

#include <stdexcept>
#include <string>

namespace pane {

// Errors are grouped by how the CLI reports them: data/format problems map to
// exit code 2, numeric failures to exit code 3.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or index contract violated.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed file or byte stream.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Stream ended before the declared payload.
class TruncationError : public FormatError {
 public:
  TruncationError(std::size_t offset, std::size_t wanted)
      : FormatError("truncated stream at byte offset " + std::to_string(offset) +
                    " (needed " + std::to_string(wanted) + " more bytes)"),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// NaN/Inf where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Bad argument value (class index out of range, ratio outside (0,1], ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

}  // namespace pane

#endif  // PANE_ERROR_HPP
