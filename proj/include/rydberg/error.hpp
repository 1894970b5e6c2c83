#pragma once

#include <stdexcept>
#include <string>

namespace rydberg {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: dimension mismatch, unknown label, out-of-range parameter,
/// malformed configuration. The CLI maps this to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: NaN during integration, non-converged or
/// rank-deficient fit. The CLI maps this to exit code 2.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class FitError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace rydberg
