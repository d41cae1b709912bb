#pragma once

#include <stdexcept>
#include <string>

namespace bbmm {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

/// An argument lies outside the domain of the operation (e.g. a negative
/// variance or more inducing points than data).
class DomainError : public Error {
 public:
  using Error::Error;
};

class UnsupportedModeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or empty input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Floating-point trouble: non-finite values, breakdown, non-convergence.
class NumericError : public Error {
 public:
  using Error::Error;
};

class NotPositiveDefiniteError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// A Krylov method observed curvature <= 0 or a Ritz value <= 0.
class IndefiniteOperatorError : public NumericError {
 public:
  using NumericError::NumericError;
};

class RangeError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace bbmm
