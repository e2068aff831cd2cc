#pragma once

#include <stdexcept>
#include <string>

namespace bcgnn {

/// Base class for every error raised by the library. The CLI maps the
/// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible matrix or vector dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration, flag value, or schema declaration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (CSV cells, masks, schemas).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or other numeric breakdown.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Corrupt, truncated, or version-mismatched checkpoint files.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace bcgnn
