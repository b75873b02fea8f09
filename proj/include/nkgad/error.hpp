#pragma once

#include <stdexcept>
#include <string>

namespace nkgad {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit the operation (also used for asymmetric input
/// to the symmetric eigensolver).
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A computation produced NaN/Inf or failed to converge.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Malformed input file. The message carries file name and line number.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A configuration value violates its contract.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A requested computation is outside what the autodiff tape supports.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

/// Model file is truncated, corrupt or carries an unknown version.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace nkgad
