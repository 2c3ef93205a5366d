// Exception types shared by every drnwm module.
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace drnwm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inputs that violate a documented precondition (wrong sizes, out-of-range
// values, too few correspondences).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Numerically degenerate geometry: epipole-coincident points, identical
// lines, collinear point sets, zero baselines.
class DegenerateGeometry : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated binary/text files.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(std::size_t line, const std::string& message)
      : Error(line == 0 ? message
                        : "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace drnwm
