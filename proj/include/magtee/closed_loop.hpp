#pragma once

// One simulated closed-loop session: physics, sensor sampling, EKF tracking
// and magnetic actuation advanced together at the estimator rate.

#include <cstdint>
#include <random>

#include "magtee/control.hpp"
#include "magtee/localization.hpp"
#include "magtee/sensing.hpp"
#include "magtee/sim_world.hpp"

namespace magtee {

struct ClosedLoopConfig {
  SensorArrayLayout layout = SensorArrayLayout::default_layout();
  SimConfig sim;
  /// Ground-truth dynamics; the controller uses controller.dynamics.
  DynamicsParams dynamics;
  Environment environment;
  ImuNoiseConfig imu;
  EkfConfig ekf;
  LsOptions ls;
  ControllerConfig controller;
  double estimator_rate = 100.0;  // Hz
  double control_rate = 50.0;     // Hz, must divide the estimator rate
  std::uint64_t seed = 1;
  /// Static background field at the sensors, estimated before the run.
  bool background_field = true;
  int calibration_frames = 20;

  /// Throws ConfigError on inconsistent rates or invalid parts.
  void validate() const;
};

struct LoopSnapshot {
  double time = 0.0;
  WorldState world;
  EstimatorState estimate;
  ControlTarget target;
  ActuatorSetpoint setpoint;
  /// Errors seen by the controller (from the estimate).
  TrackingErrors errors;
  /// Wrench requested at the last control tick.
  Wrench desired;
  double position_error = 0.0;               // |p_true - p_d|
  double orientation_error = 0.0;            // angle(m_true, m_d)
  double estimate_position_error = 0.0;      // |p_est - p_true|
  double estimate_orientation_error = 0.0;   // rotation angle between estimated and true pose
  double compute_time = 0.0;                 // wall-clock seconds spent in estimation + control
  bool control_tick = false;
};

class ClosedLoop {
 public:
  /// Calibrates the background field, initializes the estimator by LS and
  /// computes the first actuator setpoint.
  ClosedLoop(ClosedLoopConfig cfg, const WorldState& initial, const ControlTarget& target);

  /// Advances one estimator period.
  const LoopSnapshot& tick();

  const LoopSnapshot& latest() const { return snapshot_; }
  const ClosedLoopConfig& config() const { return cfg_; }
  const ControlTarget& target() const { return target_; }
  /// True when the next tick() runs the controller.
  bool next_tick_controls() const { return (tick_count_ + 1) % control_divider_ == 0; }

  void set_target(const ControlTarget& target);
  void set_gains(const ControlGains& gains);
  void disturb(const Vec3& force, double duration);

 private:
  SensorFrame sense();
  void control();
  void refresh_snapshot(double compute_time, bool control_tick);

  ClosedLoopConfig cfg_;
  std::mt19937_64 rng_;
  EnvironmentField true_background_;
  EnvironmentField background_estimate_;
  WorldState world_;
  EstimatorState estimate_;
  PoseHistory history_;
  ControlTarget target_;
  ActuatorSetpoint setpoint_;
  TrackingErrors errors_;
  Wrench desired_;
  LoopSnapshot snapshot_;
  long tick_count_ = 0;
  int control_divider_ = 2;
  double capsule_moment_ = 0.0;
  double actuator_moment_ = 0.0;
};

}  // namespace magtee
