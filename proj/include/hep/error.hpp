#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hep {

// Error taxonomy shared across the library. The CLI maps these onto exit codes.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/width mismatch between operands.
struct DimensionError : Error {
  using Error::Error;
};

// Index or id outside its valid range.
struct IndexError : Error {
  using Error::Error;
};

// Invalid input data or configuration value.
struct ValidationError : Error {
  using Error::Error;
};

// API misuse: preconditions on call order or argument kinds violated.
struct UsageError : Error {
  using Error::Error;
};

// Malformed or truncated on-disk artifact.
struct FormatError : Error {
  using Error::Error;
};

// Referenced file or artifact does not exist.
struct NotFoundError : Error {
  using Error::Error;
};

// Non-finite value produced during training; carries the failing step.
struct NumericError : Error {
  NumericError(const std::string& msg, int64_t at_step)
      : Error(msg), step(at_step) {}
  int64_t step;
};

}  // namespace hep
