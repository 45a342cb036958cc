// dykaf/errors.hpp

#pragma once

#include <stdexcept>
#include <string>

namespace dykaf {

/// Base class for all recoverable library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform (matmul, inner products, mat(), ...).
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// Result of kron/hessian/estimate would exceed the dense-size guard.
class SizeCapExceeded : public Error {
 public:
  using Error::Error;
};

/// Fractional elementwise power of a negative entry.
class NegativeBase : public Error {
 public:
  using Error::Error;
};

/// Elementwise division by an entry below the underflow floor.
class DivisionUnderflow : public Error {
 public:
  using Error::Error;
};

/// A QR input column collapsed to (near) zero norm.
class RankCollapse : public Error {
 public:
  using Error::Error;
};

/// Projector-splitting core weight S fell below its positivity floor.
class NonPositiveS : public Error {
 public:
  using Error::Error;
};

/// A Kronecker factor has (near) zero Frobenius norm.
class ZeroFactor : public Error {
 public:
  using Error::Error;
};

/// An operation requiring a nonzero gradient received a zero one.
class ZeroGradient : public Error {
 public:
  using Error::Error;
};

/// Malformed input file; carries the 1-based offending line.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, long line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

/// Requested dataset file is missing or empty.
class DatasetUnavailable : public Error {
 public:
  using Error::Error;
};

}  // namespace dykaf
