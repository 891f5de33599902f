#pragma once

// Experiment scenarios: what to simulate, how the pipeline is configured and
// which acceptance bounds a run is checked against. Scenarios round-trip
// through a strict JSON format (SI units, unknown keys rejected).

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "magtee/closed_loop.hpp"

namespace magtee {

/// Probe carried kinematically along a helix; open-loop localization only.
struct SpiralTrajectory {
  Vec3 center = Vec3(0.0, 0.0, 0.09);
  double radius = 0.06;
  double rise_per_turn = 0.02;  // m
  double speed = 0.01;          // m/s along the path
  double tilt = deg2rad(25.0);  // roll of the probe; keeps yaw observable
};

/// Static probe poses while the actuator sweeps an S-shaped path overhead.
struct GridTrajectory {
  std::vector<double> heights{0.05, 0.10, 0.15, 0.20};
  std::vector<Vec3> points;  // x, y used; z replaced by each height
  double tilt = deg2rad(25.0);
  double yaw = deg2rad(30.0);
  double dwell = 2.0;             // s per pose
  double actuator_height = 0.25;  // m above the array
  double actuator_half_span = 0.15;
  double actuator_amplitude = 0.10;
  double actuator_period = 4.0;   // s for one pass along the S
};

struct DisturbanceEvent {
  double time = 0.0;
  Vec3 force = Vec3::Zero();
  double duration = 0.0;
};

struct HoldCommand {
  double time = 0.0;
  ClinicalCommand command;
};

/// Closed-loop run: the target follows a straight line or a centerline at a
/// fixed speed; disturbances and rotation commands are scheduled by time.
struct TrackingTrajectory {
  enum class Path { line, centerline };
  Path path = Path::line;
  Pose initial_probe;
  Pose initial_actuator;
  Vec3 line_start = Vec3::Zero();
  Vec3 line_velocity = Vec3::Zero();
  Vec3 line_moment = -Vec3::UnitZ();
  double centerline_speed = 0.01;
  std::vector<DisturbanceEvent> disturbances;
  /// Applied to the path frame at the command time; replaces the path target.
  std::vector<HoldCommand> hold_commands;
};

using Trajectory = std::variant<SpiralTrajectory, GridTrajectory, TrackingTrajectory>;

struct AcceptanceSpec {
  /// Window [start, end) over which tracking means are taken.
  double window_start = 0.0;
  double window_end = 1e300;
  std::optional<double> max_mean_position_error;     // m, per seed
  std::optional<double> max_mean_orientation_error;  // rad, per seed
  /// EKF RMS position error no larger than per-frame LS on the same frames.
  bool ekf_not_worse_than_ls = false;
  /// Grid: per-axis mean absolute error and orientation bound for heights in range.
  std::optional<double> max_axis_position_error;
  std::optional<double> max_grid_orientation_error;
  double grid_min_height = 0.0;
  double grid_max_height = 1.0;
  /// Time after each disturbance ends for the trailing-window means to drop
  /// below the tracking bounds.
  std::optional<double> max_recovery_time;
  double recovery_window = 1.0;
  double recovery_position_error = 0.005;
  double recovery_orientation_error = deg2rad(5.0);
  /// Mean orientation error over the last `final_window` s of each hold.
  std::optional<double> max_final_orientation_error;
  double final_window = 0.5;
};

struct ArrayConfig {
  int nx = 6;
  int ny = 6;
  double spacing = 0.120;
  double height = 0.0;
  double noise_sigma = 1e-5;

  SensorArrayLayout layout() const { return SensorArrayLayout::grid(nx, ny, spacing, height, noise_sigma); }
};

struct EnvironmentConfig {
  enum class Kind { free, plane_channel, tube };
  Kind kind = Kind::free;
  double z_level = 0.1;
  double gap = 0.02;
  double radius = 0.010;
  double probe_half_height = 0.0075;
  std::vector<Vec3> centerline;

  /// Fits the centerline when needed. Throws ConfigError / DomainError.
  Environment build() const;
};

enum class ScenarioKind { spiral_localization, static_grid, closed_loop };

struct Scenario {
  std::string name;
  std::string description;
  std::vector<std::uint64_t> seeds{1};
  double duration = 10.0;
  double estimator_rate = 100.0;
  double control_rate = 50.0;
  ArrayConfig array;
  MagnetSpec capsule = default_capsule_magnet();
  std::optional<MagnetSpec> actuator = default_actuator_magnet();
  EkfConfig ekf;
  LsOptions ls;
  ImuNoiseConfig imu;
  DynamicsParams dynamics;
  ControllerConfig controller;
  EnvironmentConfig environment;
  bool background_field = true;
  double steady_state_start = 0.0;
  Trajectory trajectory = SpiralTrajectory{};
  AcceptanceSpec acceptance;

  ScenarioKind kind() const;
  /// Throws ConfigError for inconsistent settings.
  void validate() const;
  /// Loop configuration for one seed (closed-loop scenarios).
  ClosedLoopConfig loop_config(std::uint64_t seed) const;
};

std::string to_string(ScenarioKind kind);

nlohmann::json scenario_to_json(const Scenario& s);
/// Strict parse: unknown keys, wrong types and missing required fields throw
/// ConfigError. Missing optional fields take the defaults above.
/// A relative "centerline_file" is resolved against `base_dir`.
Scenario scenario_from_json(const nlohmann::json& j, const std::string& base_dir = "");
Scenario load_scenario_file(const std::string& path);

/// Centerline file: {"points": [[x, y, z], ...]}.
std::vector<Vec3> load_centerline_file(const std::string& path);

std::vector<std::string> builtin_scenario_names();
/// Throws ConfigError for unknown names.
Scenario builtin_scenario(const std::string& name);

}  // namespace magtee
