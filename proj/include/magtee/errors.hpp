#pragma once

#include <stdexcept>
#include <string>

namespace magtee {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Evaluation point at (or numerically at) a field singularity.
class SingularityError : public Error {
 public:
  using Error::Error;
};

/// Two magnets closer than the admissible interaction distance.
class ProximityError : public Error {
 public:
  using Error::Error;
};

/// Iterative solver failed to reach an acceptable optimum.
class NoConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Linear-algebra failure; carries the reciprocal condition estimate.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, double rcond)
      : Error(what), rcond_(rcond) {}
  double rcond() const noexcept { return rcond_; }

 private:
  double rcond_;
};

/// Pitch too close to +-90 deg for the Rz*Ry*Rx Euler convention.
class GimbalError : public Error {
 public:
  using Error::Error;
};

/// Unrecoverable state in the physics simulation.
class SimulationFault : public Error {
 public:
  using Error::Error;
};

/// Operator command exceeds the per-command safety clamp.
class ClampError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration (scenario file, parameters).
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace magtee
