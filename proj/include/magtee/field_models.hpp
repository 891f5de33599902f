#pragma once

// Analytic magnetostatic models for the capsule and actuator magnets.
//
// All functions are pure; units are SI throughout (m, T, A*m^2, N, N*m).

#include <variant>

#include "magtee/geometry.hpp"

namespace magtee {

/// Typical remanence for NdFeB grades [T].
inline constexpr double kRemanenceN45 = 1.35;
inline constexpr double kRemanenceN52 = 1.45;

/// Dipole evaluation refuses separations below this radius [m].
inline constexpr double kDipoleSingularityRadius = 1e-4;
/// Smallest capsule/actuator separation accepted by dipole_wrench [m].
inline constexpr double kMinCouplingDistance = 0.05;

struct CylinderShape {
  double radius = 0.0;       // R [m]
  double half_length = 0.0;  // L [m]; the body spans z in [-L, L]
};

struct CuboidShape {
  Vec3 sides = Vec3::Zero();  // full side lengths [m]
};

/// Geometry and grade of a uniformly, axially magnetized permanent magnet.
/// The magnetization axis is the body z-axis.
class MagnetSpec {
 public:
  using Shape = std::variant<CylinderShape, CuboidShape>;

  /// Throws DomainError if any dimension is non-positive or remanence < 0.
  MagnetSpec(Shape shape, double remanence);

  static MagnetSpec cylinder(double radius, double half_length, double remanence);
  static MagnetSpec cuboid(double a, double b, double c, double remanence);

  const Shape& shape() const { return shape_; }
  bool is_cylinder() const { return std::holds_alternative<CylinderShape>(shape_); }
  const CylinderShape& as_cylinder() const;

  double remanence() const { return remanence_; }
  double volume() const;
  /// Radius of the smallest sphere centred on the magnet enclosing it.
  double bounding_radius() const;
  /// |m| = Br * V / mu0.
  double dipole_moment_magnitude() const { return remanence_ * volume() / kMu0; }

 private:
  Shape shape_;
  double remanence_;
};

/// N45 cylinder, 90 mm diameter and 90 mm length.
MagnetSpec default_actuator_magnet();
/// N52 cuboid, 20 x 15 x 11 mm.
MagnetSpec default_capsule_magnet();

double moment_from_spec(const MagnetSpec& spec);

struct Wrench {
  Vec3 force = Vec3::Zero();   // N
  Vec3 torque = Vec3::Zero();  // N*m

  bool all_finite() const { return force.allFinite() && torque.allFinite(); }
};

/// Point-dipole field of `moment` located at `source`, evaluated at `target`.
/// Throws SingularityError when the two points are closer than 1e-4 m.
Vec3 dipole_field(const Vec3& moment, const Vec3& source, const Vec3& target);

/// Spatial gradient d b / d target of the dipole field (symmetric, T/m).
Mat3 dipole_field_gradient(const Vec3& moment, const Vec3& source, const Vec3& target);

/// d b / d source: sensitivity of the field at a fixed sensor to the
/// position of the source magnet. Equal to minus the spatial gradient.
Mat3 dipole_position_jacobian(const Vec3& moment, const Vec3& source, const Vec3& target);

/// Unit moment direction R_z(yaw) R_y(pitch) R_x(roll) e_z.
Vec3 moment_direction(double roll, double pitch, double yaw);

/// d(moment_direction)/d(yaw).
Vec3 moment_direction_yaw_derivative(double roll, double pitch, double yaw);

/// d b / d yaw for a capsule of moment magnitude `moment_magnitude` with the
/// given roll/pitch/yaw, located at `source`, seen from `target`.
Vec3 dipole_yaw_jacobian(double roll, double pitch, double yaw, double moment_magnitude,
                         const Vec3& source, const Vec3& target);

/// Bulirsch's generalized complete elliptic integral
///   C(kc, p, c, s) = int_0^{pi/2} (c cos^2 + s sin^2) /
///                    ((cos^2 + p sin^2) sqrt(cos^2 + kc^2 sin^2)) dphi.
/// Throws DomainError unless kc > 0 and p > 0.
double generalized_elliptic_integral(double kc, double p, double c, double s);

/// Exact field of an axially magnetized cylinder (magnet frame z = axis) at
/// `target`. Throws DomainError inside the body and SingularityError on the
/// edge rings (rho = R, |z| = L).
Vec3 cylinder_field(const MagnetSpec& spec, const Pose& magnet_pose, const Vec3& target);

/// Force and torque exerted on the capsule dipole by the actuator dipole.
/// Throws ProximityError when the separation is below 0.05 m.
Wrench dipole_wrench(const Vec3& capsule_moment, const Vec3& capsule_pos,
                     const Vec3& actuator_moment, const Vec3& actuator_pos);

/// Interaction potential energy -m_c . b_a(p_c) [J].
double dipole_interaction_energy(const Vec3& capsule_moment, const Vec3& capsule_pos,
                                 const Vec3& actuator_moment, const Vec3& actuator_pos);

}  // namespace magtee
