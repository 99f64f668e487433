#pragma once

#include <stdexcept>
#include <string>

namespace deepgap {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value violated an operation's precondition (out of range, non-finite, too short).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Tensor or matrix dimensions disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration: unknown key, missing column, invalid field value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data is unusable (too many rejected rows, coverage holes, misaligned bins).
class DataError : public Error {
 public:
  using Error::Error;
};

/// NaN or infinity showed up in a loss or gradient.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace deepgap
