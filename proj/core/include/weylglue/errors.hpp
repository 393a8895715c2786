#pragma once

#include <stdexcept>
#include <string>

namespace weylglue {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Input tensor violates a required index symmetry beyond tolerance.
class SymmetryError : public Error {
 public:
  using Error::Error;
};

// Metric not positive definite / not invertible at the evaluation point.
class SingularMetricError : public Error {
 public:
  using Error::Error;
};

// Evaluation at (or too close to) a pole of a singular field.
class PoleError : public Error {
 public:
  using Error::Error;
};

// Point outside the declared domain of a field or rule.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Finite-difference stencil would leave the declared domain.
class MarginError : public Error {
 public:
  using Error::Error;
};

// Invalid parameter combination (scale ordering, t <= 1, bad config file).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A convergence or internal cross-check failed beyond its tolerance.
class AccuracyError : public Error {
 public:
  using Error::Error;
};

// Requested computation path cannot handle the given input.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

// Two inputs that must describe the same geometry disagree.
class InputMismatchError : public Error {
 public:
  using Error::Error;
};

}  // namespace weylglue
