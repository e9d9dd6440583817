#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace refu {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not conform.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Bad argument value: non-finite entries, zero sizes, eta <= 0, ...
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Class-incremental protocol violation (duplicate or unregistered class ids).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. `line()` is 1-based; 0 when not tied to a line.
class ParseError : public Error {
 public:
  ParseError(const std::string& detail, std::size_t line)
      : ParseError(detail, line, line == 0 ? detail : "line " + std::to_string(line) + ": " + detail) {}
  std::size_t line() const noexcept { return line_; }
  const std::string& detail() const noexcept { return detail_; }

  /// Same error, prefixed with the file it came from.
  ParseError in_file(const std::string& path) const {
    return ParseError(detail_, line_,
                      path + ":" + (line_ == 0 ? " " : std::to_string(line_) + ": ") + detail_);
  }

 private:
  ParseError(const std::string& detail, std::size_t line, const std::string& message)
      : Error(message), detail_(detail), line_(line) {}

  std::string detail_;
  std::size_t line_;
};

/// Base for failures of the numerics themselves (exit code 2 in the CLI).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Cholesky hit a non-positive pivot.
class DefinitenessError : public NumericalError {
 public:
  DefinitenessError(const std::string& what, std::size_t pivot)
      : NumericalError(what + " (pivot " + std::to_string(pivot) + ")"), pivot_(pivot) {}
  std::size_t pivot() const noexcept { return pivot_; }

 private:
  std::size_t pivot_;
};

/// Training produced a non-finite loss.
class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, std::size_t epoch)
      : NumericalError(what + " at epoch " + std::to_string(epoch)), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

}  // namespace refu
