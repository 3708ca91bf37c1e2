#pragma once

#include <stdexcept>
#include <string>

namespace xel {

/// Root of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf appeared where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the reverse-mode tape (non-scalar loss, consumed tape, ...).
class TapeError : public Error {
 public:
  using Error::Error;
};

/// A lookup by string id failed (function, variant, preset, axis, scheme).
class UnknownIdError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the documented domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Derivative requested at a registered non-differentiable point.
class SingularityError : public Error {
 public:
  using Error::Error;
};

/// Quantizer calibration cannot produce strictly ascending edges.
class DegenerateBinsError : public Error {
 public:
  using Error::Error;
};

/// Adaptive quadrature did not meet its tolerance.
class QuadratureError : public Error {
 public:
  using Error::Error;
};

/// The empirical resolution oracle found its monotonicity premise violated.
class OracleAssumptionError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// A configuration document failed validation; message names the field path.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Binary container errors. Each failure mode has its own type.
class FormatError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace xel
