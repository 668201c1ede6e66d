#pragma once

#include <stdexcept>
#include <string>

namespace gchoreo {

// Caller supplied something outside an operation's domain (shape, range,
// malformed input). The CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A persisted file or artifact could not be decoded. Treated as a
// validation failure of the input.
class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Numerical failure during computation (non-finite loss, degenerate
// distribution). The CLI maps this to exit code 1.
class ComputeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gchoreo
