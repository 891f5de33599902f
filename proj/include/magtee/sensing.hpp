#pragma once

// Simulated external magnetometer array and capsule IMU, plus the measurement
// pre-processing that isolates the capsule's own field.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "magtee/field_models.hpp"
#include "magtee/geometry.hpp"

namespace magtee {

using FieldReadings = std::vector<Vec3>;

struct SensorArrayLayout {
  std::vector<Vec3> positions;
  double noise_sigma = 1e-5;  // per-axis Gaussian noise [T]

  /// nx-by-ny grid in the plane z = `height`, centred on the origin.
  static SensorArrayLayout grid(int nx, int ny, double spacing, double height = 0.0,
                                double noise_sigma = 1e-5);
  /// 6 x 6 sensors at 120 mm pitch.
  static SensorArrayLayout default_layout() { return grid(6, 6, 0.120); }

  std::size_t size() const { return positions.size(); }
  /// Throws ConfigError for fewer than 8 sensors, duplicates or bad sigma.
  void validate() const;
};

/// One synchronized snapshot of the array and the IMU.
struct SensorFrame {
  double timestamp = 0.0;
  FieldReadings raw_fields;
  Vec3 imu_accel = Vec3::Zero();  // specific force, body frame [m/s^2]
  Vec3 imu_gyro = Vec3::Zero();   // body angular rate [rad/s]
  double imu_roll = 0.0;
  double imu_pitch = 0.0;
};

/// Static per-sensor background (mostly the geomagnetic field).
struct EnvironmentField {
  FieldReadings per_sensor_bias;

  static EnvironmentField zeros(std::size_t n) { return {FieldReadings(n, Vec3::Zero())}; }
  /// Random Earth-like background: a common field plus small per-sensor
  /// perturbations, all well below the 2e-4 T sanity bound.
  static EnvironmentField earth_like(std::size_t n, std::uint64_t seed);
  /// Throws DomainError for non-finite entries or magnitudes >= 2e-4 T.
  void validate() const;
};

/// A magnet together with where it is.
struct PlacedMagnet {
  MagnetSpec spec;
  Pose pose;

  Vec3 moment() const { return spec.dipole_moment_magnitude() * pose.z_axis(); }
};

/// Field of the actuator at `point`: the exact cylinder model when the magnet
/// is a cylinder, the dipole model otherwise.
Vec3 actuator_field(const PlacedMagnet& actuator, const Vec3& point);

/// Noise-free sum of capsule dipole + actuator field + environment at every sensor.
FieldReadings ideal_array_readings(const SensorArrayLayout& layout,
                                   const std::optional<PlacedMagnet>& capsule,
                                   const std::optional<PlacedMagnet>& actuator,
                                   const EnvironmentField& env);

/// Noisy array readings drawing from `rng`.
FieldReadings sample_array(const SensorArrayLayout& layout,
                           const std::optional<PlacedMagnet>& capsule,
                           const std::optional<PlacedMagnet>& actuator,
                           const EnvironmentField& env, std::mt19937_64& rng);

/// Noisy array readings, reproducible from `noise_seed`.
FieldReadings sample_array(const SensorArrayLayout& layout,
                           const std::optional<PlacedMagnet>& capsule,
                           const std::optional<PlacedMagnet>& actuator,
                           const EnvironmentField& env, std::uint64_t noise_seed);

/// Per-sensor mean of frames recorded with no magnets in the workspace.
/// Needs at least 10 frames.
EnvironmentField estimate_environment(const std::vector<SensorFrame>& frames);

inline constexpr std::size_t kMinEnvironmentFrames = 10;

/// b_c = b_raw - b_actuator - b_env at every sensor.
FieldReadings extract_capsule_field(const SensorFrame& frame, const SensorArrayLayout& layout,
                                    const std::optional<PlacedMagnet>& actuator,
                                    const EnvironmentField& env);

struct ImuNoiseConfig {
  double accel_sigma = 0.05;              // m/s^2
  double gyro_sigma = 0.01;               // rad/s
  double attitude_sigma = deg2rad(0.2);   // rad, on roll and pitch

  static ImuNoiseConfig none() { return {0.0, 0.0, 0.0}; }
};

struct ImuReading {
  Vec3 accel = Vec3::Zero();
  Vec3 gyro = Vec3::Zero();
  double roll = 0.0;
  double pitch = 0.0;
};

/// Pitch must stay this far from +-pi/2.
inline constexpr double kGimbalMargin = 1e-3;

/// Simulated IMU: accel = R^T (a_world - g), gyro = body rate, plus roll and
/// pitch read directly from the true attitude. Throws GimbalError near
/// |pitch| = pi/2.
ImuReading sample_imu(const Pose& true_pose, const Vec3& true_world_accel,
                      const Vec3& true_body_gyro, const ImuNoiseConfig& noise,
                      std::mt19937_64& rng);
ImuReading sample_imu(const Pose& true_pose, const Vec3& true_world_accel,
                      const Vec3& true_body_gyro, const ImuNoiseConfig& noise,
                      std::uint64_t noise_seed);

// ---------------------------------------------------------- frame recording

/// A SensorFrame plus the actuator pose reported alongside it, as stored in
/// line-delimited JSON recordings.
struct RecordedFrame {
  SensorFrame frame;
  std::optional<Pose> actuator_pose;
};

std::string frame_to_json_line(const RecordedFrame& rec);
/// Throws ConfigError on malformed input.
RecordedFrame frame_from_json_line(const std::string& line);

void write_frames(std::ostream& out, const std::vector<RecordedFrame>& frames);
/// Reads until EOF; blank lines are skipped. Enforces monotone timestamps and
/// a constant reading count.
std::vector<RecordedFrame> read_frames(std::istream& in);

}  // namespace magtee
