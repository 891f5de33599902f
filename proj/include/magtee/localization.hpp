#pragma once

// Capsule localization: multi-start least-squares initialization and an EKF
// over the four magnetically observable unknowns [p_c; yaw], fused with the
// IMU's roll and pitch into a full pose.

#include <iosfwd>
#include <optional>

#include <Eigen/Dense>

#include "magtee/geometry.hpp"
#include "magtee/sensing.hpp"

namespace magtee {

using Mat4 = Eigen::Matrix4d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// Tilt of the moment from vertical below which yaw is treated as unobservable
/// (compared on sin(tilt)).
inline constexpr double kYawObservabilityThreshold = 0.05;

struct EkfConfig {
  Mat4 process_noise = Eigen::Vector4d(0.01, 0.01, 0.01, 30.0).asDiagonal();
  double measurement_noise_sigma = 1e-5;
  double dt = 0.01;

  /// Throws ConfigError unless Q is diagonal with positive entries, sigma > 0, dt > 0.
  void validate() const;
};

struct EstimatorState {
  double time = 0.0;
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;
  Mat4 covariance = Mat4::Identity();
  Vec3 velocity = Vec3::Zero();  // held, not propagated
  double roll = 0.0;              // latest IMU roll
  double pitch = 0.0;             // latest IMU pitch
  Pose full_pose;
  bool yaw_observable = true;

  /// Rebuilds full_pose from position and (roll, pitch, yaw).
  void recompose();
  Vec3 moment_direction() const;
};

/// sin of the moment's tilt from the vertical for the given roll and pitch.
double moment_tilt_sine(double roll, double pitch);

/// Stacked dipole model h(x): the capsule field at every sensor (3N).
VecX measurement_model(const Vec3& position, double roll, double pitch, double yaw,
                       const SensorArrayLayout& layout, double moment_magnitude);

/// Stacked [db_i/dp_c  db_i/dyaw] rows, 3N x 4.
MatX measurement_jacobian(const Vec3& position, double roll, double pitch, double yaw,
                          const SensorArrayLayout& layout, double moment_magnitude);
MatX measurement_jacobian(const EstimatorState& predicted, double roll, double pitch,
                          const SensorArrayLayout& layout, double moment_magnitude);

// ------------------------------------------------------------ least squares

struct LsOptions {
  int grid_points = 5;               // per horizontal axis
  double grid_half_extent = 0.20;    // m
  double grid_height = 0.10;         // m above the array plane
  int yaw_starts = 4;                // 0, 90, 180, 270 deg
  int max_iterations = 100;
  double gradient_tolerance = 1e-12;
  double noise_sigma = 1e-5;         // residual normalization [T]
  /// Accept when the RMS per-component residual is at most this many sigmas.
  double max_rms_sigmas = 5.0;
  /// Accepted positions: |x|, |y| <= workspace_half_extent, z in [min_z, max_z].
  double workspace_half_extent = 0.30;
  double min_z = 0.005;
  double max_z = 0.35;
};

struct LsResult {
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;
  bool yaw_observable = true;
  double rms_residual = 0.0;  // RMS per-component residual [T]
  int iterations = 0;
};

/// Multi-start LS fit of (p_c, yaw) to the capsule fields. Throws
/// NoConvergenceError when no start reaches an acceptable optimum.
LsResult ls_initialize(const FieldReadings& capsule_fields, double roll, double pitch,
                       const SensorArrayLayout& layout, double moment_magnitude,
                       const LsOptions& opts = {});

/// Single LS solve from a given start; no acceptance test is applied.
LsResult ls_refine(const FieldReadings& capsule_fields, double roll, double pitch,
                   const SensorArrayLayout& layout, double moment_magnitude,
                   const Vec3& start_position, double start_yaw, const LsOptions& opts = {});

// -------------------------------------------------------------------- EKF

/// Initial covariance after an LS fix.
Mat4 default_initial_covariance();

EstimatorState state_from_ls(const LsResult& ls, double roll, double pitch, double time,
                             const Mat4& covariance = default_initial_covariance());

/// Zero-velocity motion model: p += (R a + g) dt^2 / 2, R <- R exp(w dt),
/// yaw taken from the advanced rotation, P += Q. Throws GimbalError when the
/// advanced pitch is within the gimbal margin.
EstimatorState ekf_predict(const EstimatorState& state, const Vec3& accel, const Vec3& gyro,
                           const EkfConfig& cfg);

/// Measurement correction with a Joseph-form covariance update. Throws
/// NumericalError if the innovation covariance cannot be factorized.
EstimatorState ekf_update(const EstimatorState& predicted, const FieldReadings& capsule_fields,
                          double roll, double pitch, const SensorArrayLayout& layout,
                          double moment_magnitude, const EkfConfig& cfg);

/// extract_capsule_field -> ekf_predict -> ekf_update.
EstimatorState track_step(const EstimatorState& state, const SensorFrame& frame,
                          const std::optional<PlacedMagnet>& actuator,
                          const EnvironmentField& env, const SensorArrayLayout& layout,
                          const MagnetSpec& capsule_spec, const EkfConfig& cfg);

/// CSV header and row: t, px, py, pz, roll, pitch, yaw, trace_P.
void write_estimate_header(std::ostream& out);
void write_estimate_row(std::ostream& out, const EstimatorState& s);

}  // namespace magtee
