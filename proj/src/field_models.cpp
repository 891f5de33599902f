#include "magtee/field_models.hpp"

#include <cmath>
#include <string>

#include "magtee/errors.hpp"

namespace magtee {
namespace {

constexpr double kMu0Over4Pi = 1e-7;

void check_separation(const Vec3& r) {
  if (!(r.norm() > kDipoleSingularityRadius)) {
    throw SingularityError("dipole evaluated within " +
                           std::to_string(kDipoleSingularityRadius) + " m of its source");
  }
}

// Bulirsch's algorithm for cel(kc, p, c, s), including the p <= 0 branch
// (needed at rho = R where the cylinder's P2 uses p = 0). The AGM loop
// converges quadratically; stopping at 1e-8 leaves ~1e-16 relative error.
double cel_unchecked(double kc, double p, double c, double s) {
  constexpr double kTol = 1e-8;
  double k = std::abs(kc);
  double pp = p;
  double cc = c;
  double ss = s;
  double em = 1.0;
  if (pp > 0.0) {
    pp = std::sqrt(pp);
    ss = s / pp;
  } else {
    double f = kc * kc;
    double q = 1.0 - f;
    const double g = 1.0 - pp;
    f -= pp;
    q *= (ss - c * pp);
    pp = std::sqrt(f / g);
    cc = (c - ss) / g;
    ss = -q / (g * g * pp) + cc * pp;
  }
  double f = cc;
  cc += ss / pp;
  double g = k / pp;
  ss = 2.0 * (ss + f * g);
  pp += g;
  g = em;
  em += k;
  double kk = k;
  for (int iter = 0; iter < 64 && std::abs(g - k) > g * kTol; ++iter) {
    k = 2.0 * std::sqrt(kk);
    kk = k * em;
    f = cc;
    cc += ss / pp;
    g = kk / pp;
    ss = 2.0 * (ss + f * g);
    pp += g;
    g = em;
    em += k;
  }
  return 0.5 * std::numbers::pi * (ss + cc * em) / (em * (em + pp));
}

}  // namespace

// ---------------------------------------------------------------- MagnetSpec

MagnetSpec::MagnetSpec(Shape shape, double remanence)
    : shape_(std::move(shape)), remanence_(remanence) {
  if (!(remanence_ >= 0.0) || !std::isfinite(remanence_)) {
    throw DomainError("magnet remanence must be finite and non-negative");
  }
  if (const auto* cyl = std::get_if<CylinderShape>(&shape_)) {
    if (!(cyl->radius > 0.0) || !(cyl->half_length > 0.0)) {
      throw DomainError("cylinder radius and half-length must be positive");
    }
  } else {
    const auto& cub = std::get<CuboidShape>(shape_);
    if (!(cub.sides.minCoeff() > 0.0)) {
      throw DomainError("cuboid side lengths must be positive");
    }
  }
}

MagnetSpec MagnetSpec::cylinder(double radius, double half_length, double remanence) {
  return MagnetSpec(CylinderShape{radius, half_length}, remanence);
}

MagnetSpec MagnetSpec::cuboid(double a, double b, double c, double remanence) {
  return MagnetSpec(CuboidShape{Vec3(a, b, c)}, remanence);
}

const CylinderShape& MagnetSpec::as_cylinder() const {
  if (const auto* cyl = std::get_if<CylinderShape>(&shape_)) return *cyl;
  throw DomainError("magnet is not a cylinder");
}

double MagnetSpec::volume() const {
  if (const auto* cyl = std::get_if<CylinderShape>(&shape_)) {
    return std::numbers::pi * cyl->radius * cyl->radius * 2.0 * cyl->half_length;
  }
  return std::get<CuboidShape>(shape_).sides.prod();
}

double MagnetSpec::bounding_radius() const {
  if (const auto* cyl = std::get_if<CylinderShape>(&shape_)) {
    return std::hypot(cyl->radius, cyl->half_length);
  }
  return 0.5 * std::get<CuboidShape>(shape_).sides.norm();
}

MagnetSpec default_actuator_magnet() {
  return MagnetSpec::cylinder(0.045, 0.045, kRemanenceN45);
}

MagnetSpec default_capsule_magnet() {
  return MagnetSpec::cuboid(0.020, 0.015, 0.011, kRemanenceN52);
}

double moment_from_spec(const MagnetSpec& spec) { return spec.dipole_moment_magnitude(); }

// -------------------------------------------------------------- dipole model

Vec3 dipole_field(const Vec3& moment, const Vec3& source, const Vec3& target) {
  const Vec3 r = target - source;
  check_separation(r);
  const double r2 = r.squaredNorm();
  const double r5 = r2 * r2 * std::sqrt(r2);
  return (kMu0Over4Pi / r5) * (3.0 * r * r.dot(moment) - r2 * moment);
}

Mat3 dipole_field_gradient(const Vec3& moment, const Vec3& source, const Vec3& target) {
  const Vec3 r = target - source;
  check_separation(r);
  const double r2 = r.squaredNorm();
  const double r5 = r2 * r2 * std::sqrt(r2);
  const double rm = r.dot(moment);
  const Mat3 g = rm * (Mat3::Identity() - (5.0 / r2) * r * r.transpose()) +
                 r * moment.transpose() + moment * r.transpose();
  return (3.0 * kMu0Over4Pi / r5) * g;
}

Mat3 dipole_position_jacobian(const Vec3& moment, const Vec3& source, const Vec3& target) {
  return -dipole_field_gradient(moment, source, target);
}

Vec3 moment_direction(double roll, double pitch, double yaw) {
  const double ca = std::cos(roll), sa = std::sin(roll);
  const double cb = std::cos(pitch), sb = std::sin(pitch);
  const double cg = std::cos(yaw), sg = std::sin(yaw);
  return Vec3(cg * sb * ca + sg * sa, sg * sb * ca - cg * sa, cb * ca);
}

Vec3 moment_direction_yaw_derivative(double roll, double pitch, double yaw) {
  const double ca = std::cos(roll), sa = std::sin(roll);
  const double sb = std::sin(pitch);
  const double cg = std::cos(yaw), sg = std::sin(yaw);
  return Vec3(sa * cg - ca * sb * sg, sa * sg + ca * sb * cg, 0.0);
}

Vec3 dipole_yaw_jacobian(double roll, double pitch, double yaw, double moment_magnitude,
                         const Vec3& source, const Vec3& target) {
  // The field is linear in the moment, so d b / d yaw is the field of the
  // moment derivative.
  const Vec3 dm = moment_magnitude * moment_direction_yaw_derivative(roll, pitch, yaw);
  const Vec3 r = target - source;
  check_separation(r);
  const double r2 = r.squaredNorm();
  const double r5 = r2 * r2 * std::sqrt(r2);
  return (kMu0Over4Pi / r5) * (3.0 * r * r.dot(dm) - r2 * dm);
}

// ----------------------------------------------------------- cylinder model

double generalized_elliptic_integral(double kc, double p, double c, double s) {
  if (!(kc > 0.0)) throw DomainError("generalized elliptic integral requires kc > 0");
  if (!(p > 0.0)) throw DomainError("generalized elliptic integral requires p > 0");
  return cel_unchecked(kc, p, c, s);
}

Vec3 cylinder_field(const MagnetSpec& spec, const Pose& magnet_pose, const Vec3& target) {
  const CylinderShape& cyl = spec.as_cylinder();
  const double R = cyl.radius;
  const double L = cyl.half_length;

  const Vec3 local = magnet_pose.orientation.transpose() * (target - magnet_pose.position);
  const double rho = std::hypot(local.x(), local.y());
  const double z = local.z();

  const double edge_tol = 1e-12 * std::max(R, L);
  if (std::abs(rho - R) <= edge_tol && std::abs(std::abs(z) - L) <= edge_tol) {
    throw SingularityError("cylinder field evaluated on the magnet edge ring");
  }
  if (rho < R && std::abs(z) < L) {
    throw DomainError("cylinder field evaluated inside the magnet body");
  }

  // Br = mu0 * M.
  const double br = spec.remanence();
  // Sign of gamma follows Derby & Olbert so that the on-axis limit reduces to
  // (Br/2)[(z+L)/sqrt((z+L)^2+R^2) - (z-L)/sqrt((z-L)^2+R^2)].
  const double gamma = (R - rho) / (R + rho);
  const double gamma2 = gamma * gamma;

  double b_rho = 0.0;
  double b_z = 0.0;
  for (const double sign : {+1.0, -1.0}) {
    const double xi = z + sign * L;
    const double sum2 = xi * xi + (rho + R) * (rho + R);
    const double alpha = 1.0 / std::sqrt(sum2);
    const double beta = xi * alpha;
    const double k = std::sqrt((xi * xi + (rho - R) * (rho - R)) / sum2);
    const double p1 = cel_unchecked(k, 1.0, 1.0, -1.0);
    const double p2 = cel_unchecked(k, gamma2, 1.0, gamma);
    b_rho += sign * alpha * p1;
    b_z += sign * beta * p2;
  }
  b_rho *= br * R / std::numbers::pi;
  b_z *= br * R / (std::numbers::pi * (rho + R));

  Vec3 b_local(0.0, 0.0, b_z);
  if (rho > 0.0) {
    b_local.x() = b_rho * local.x() / rho;
    b_local.y() = b_rho * local.y() / rho;
  }
  return magnet_pose.orientation * b_local;
}

// ------------------------------------------------------------------ wrench

Wrench dipole_wrench(const Vec3& capsule_moment, const Vec3& capsule_pos,
                     const Vec3& actuator_moment, const Vec3& actuator_pos) {
  if ((capsule_pos - actuator_pos).norm() < kMinCouplingDistance) {
    throw ProximityError("capsule and actuator closer than " +
                         std::to_string(kMinCouplingDistance) + " m");
  }
  const Vec3 b = dipole_field(actuator_moment, actuator_pos, capsule_pos);
  const Mat3 grad = dipole_field_gradient(actuator_moment, actuator_pos, capsule_pos);
  Wrench w;
  // grad(m_c . b) = G^T m_c, and G is symmetric for a curl-free field.
  w.force = grad.transpose() * capsule_moment;
  w.torque = capsule_moment.cross(b);
  return w;
}

double dipole_interaction_energy(const Vec3& capsule_moment, const Vec3& capsule_pos,
                                 const Vec3& actuator_moment, const Vec3& actuator_pos) {
  return -capsule_moment.dot(dipole_field(actuator_moment, actuator_pos, capsule_pos));
}

}  // namespace magtee
