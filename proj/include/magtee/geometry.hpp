#pragma once

#include <Eigen/Dense>
#include <numbers>

namespace magtee {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Vacuum permeability [T*m/A].
inline constexpr double kMu0 = 4.0e-7 * std::numbers::pi;
/// Standard gravity magnitude [m/s^2].
inline constexpr double kGravity = 9.81;

/// Gravity vector in the world frame {W} (z up).
inline Vec3 gravity_vector() { return Vec3(0.0, 0.0, -kGravity); }

inline constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

Mat3 rot_x(double angle);
Mat3 rot_y(double angle);
Mat3 rot_z(double angle);

/// Roll/pitch/yaw with R = Rz(yaw) * Ry(pitch) * Rx(roll).
struct EulerAngles {
  double roll = 0.0;
  double pitch = 0.0;
  double yaw = 0.0;
};

Mat3 rotation_from_euler(const EulerAngles& e);

/// Inverse of rotation_from_euler. Ambiguous at |pitch| = pi/2; callers that
/// care check pitch against a gimbal guard themselves.
EulerAngles euler_from_rotation(const Mat3& r);

/// Rotation matrix for the axis-angle vector `w` (Rodrigues).
Mat3 exp_so3(const Vec3& w);

/// Wraps an angle into (-pi, pi].
double wrap_angle(double angle);

/// True when R^T R = I within `tol` and det(R) > 0.
bool is_rotation(const Mat3& r, double tol = 1e-9);

/// Re-orthonormalizes a nearly orthonormal matrix.
Mat3 orthonormalize(const Mat3& r);

/// Rotation taking `from` onto `to` along the great circle (unit vectors).
Mat3 rotation_between(const Vec3& from, const Vec3& to);

/// Any unit vector perpendicular to `v`.
Vec3 any_perpendicular(const Vec3& v);

/// Rigid-body pose in the world frame {W}.
struct Pose {
  Vec3 position = Vec3::Zero();
  Mat3 orientation = Mat3::Identity();

  static Pose from_euler(const Vec3& position, const EulerAngles& e) {
    return Pose{position, rotation_from_euler(e)};
  }

  EulerAngles euler() const { return euler_from_rotation(orientation); }

  /// Body z-axis in {W}; for a magnet frame this is the moment direction.
  Vec3 z_axis() const { return orientation.col(2); }
  Vec3 x_axis() const { return orientation.col(0); }
};

}  // namespace magtee
