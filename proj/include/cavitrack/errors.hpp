#pragma once

#include <stdexcept>
#include <string>

namespace cavitrack {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the domain of an operation (parameter range, t outside [0,1], ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Derivative order exceeds the spline degree.
class DegreeError : public Error {
 public:
  using Error::Error;
};

/// Evaluation at a degenerate point of a geometry map.
class SingularityError : public Error {
 public:
  using Error::Error;
};

class InterpolationError : public Error {
 public:
  using Error::Error;
};

/// A deformation that flips the sign of the Jacobian somewhere in the patch.
class InvalidDeformationError : public Error {
 public:
  using Error::Error;
};

class AssemblyError : public Error {
 public:
  using Error::Error;
};

/// Sparse or dense factorization failed. `retry_with_perturbed_shift` is set
/// when the failure came from a shift that coincides with an eigenvalue.
class FactorizationError : public Error {
 public:
  explicit FactorizationError(const std::string& what, bool retry = false)
      : Error(what), retry_with_perturbed_shift(retry) {}
  bool retry_with_perturbed_shift;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Singular bordered system: nearly multiple eigenvalue or c orthogonal to e.
class DegeneracyError : public Error {
 public:
  using Error::Error;
};

class DegenerateDataError : public Error {
 public:
  using Error::Error;
};

/// Tensor grid would exceed the node-count guard.
class DimensionalityError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File could not be read, written or parsed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace cavitrack
