#include "magtee/closed_loop.hpp"

#include <chrono>
#include <cmath>

#include "magtee/errors.hpp"
#include "magtee/metrics.hpp"

namespace magtee {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

void ClosedLoopConfig::validate() const {
  layout.validate();
  dynamics.validate();
  controller.dynamics.validate();
  controller.gains.validate();
  controller.box.validate();
  environment.validate();
  ekf.validate();
  if (!sim.actuator) throw ConfigError("closed loop needs an actuator magnet");
  if (!(estimator_rate > 0.0) || !(control_rate > 0.0) || control_rate > estimator_rate) {
    throw ConfigError("rates must be positive with control_rate <= estimator_rate");
  }
  const double ratio = estimator_rate / control_rate;
  if (std::abs(ratio - std::round(ratio)) > 1e-9) {
    throw ConfigError("control_rate must divide the estimator rate");
  }
  if (1.0 / estimator_rate > 0.02) throw ConfigError("estimator rate must be at least 50 Hz");
  if (std::abs(ekf.dt - 1.0 / estimator_rate) > 1e-12) throw ConfigError("ekf.dt must equal 1 / estimator_rate");
  if (calibration_frames < static_cast<int>(kMinEnvironmentFrames)) {
    throw ConfigError("calibration needs at least 10 frames");
  }
}

ClosedLoop::ClosedLoop(ClosedLoopConfig cfg, const WorldState& initial, const ControlTarget& target)
    : cfg_(std::move(cfg)), rng_(cfg_.seed), world_(initial), target_(target) {
  cfg_.validate();
  target_.validate();
  control_divider_ = static_cast<int>(std::lround(cfg_.estimator_rate / cfg_.control_rate));
  capsule_moment_ = moment_from_spec(cfg_.sim.capsule);
  actuator_moment_ = moment_from_spec(*cfg_.sim.actuator);
  history_ = PoseHistory(std::max(1.0, 2.0 * cfg_.controller.velocity_window));

  const std::size_t n = cfg_.layout.size();
  true_background_ = cfg_.background_field ? EnvironmentField::earth_like(n, cfg_.seed ^ 0x5bd1e995ULL)
                                           : EnvironmentField::zeros(n);
  std::vector<SensorFrame> calibration;
  for (int i = 0; i < cfg_.calibration_frames; ++i) {
    SensorFrame f;
    f.timestamp = i / cfg_.estimator_rate;
    f.raw_fields = sample_array(cfg_.layout, std::nullopt, std::nullopt, true_background_, rng_);
    calibration.push_back(std::move(f));
  }
  background_estimate_ = estimate_environment(calibration);

  const auto start = std::chrono::steady_clock::now();
  const SensorFrame first = sense();
  const FieldReadings fields = extract_capsule_field(
      first, cfg_.layout, PlacedMagnet{*cfg_.sim.actuator, world_.actuator_pose}, background_estimate_);
  const LsResult ls = ls_initialize(fields, first.imu_roll, first.imu_pitch, cfg_.layout, capsule_moment_, cfg_.ls);
  estimate_ = state_from_ls(ls, first.imu_roll, first.imu_pitch, world_.time);
  history_.push({estimate_.time, estimate_.position, estimate_.moment_direction()});

  setpoint_.position = world_.actuator_pose.position;
  setpoint_.moment_dir = world_.actuator_pose.z_axis();
  control();
  refresh_snapshot(seconds_since(start), true);
}

SensorFrame ClosedLoop::sense() {
  SensorFrame f;
  f.timestamp = world_.time;
  f.raw_fields = sample_array(cfg_.layout, PlacedMagnet{cfg_.sim.capsule, world_.probe_pose},
                              PlacedMagnet{*cfg_.sim.actuator, world_.actuator_pose}, true_background_, rng_);
  const ImuReading imu = sample_imu(world_.probe_pose, world_.last_acceleration, world_.angular_velocity,
                                    cfg_.imu, rng_);
  f.imu_accel = imu.accel;
  f.imu_gyro = imu.gyro;
  f.imu_roll = imu.roll;
  f.imu_pitch = imu.pitch;
  return f;
}

void ClosedLoop::control() {
  // The solve starts from where the actuator actually is, not where it was sent.
  ActuatorSetpoint warm = setpoint_;
  warm.position = world_.actuator_pose.position;
  warm.moment_dir = world_.actuator_pose.z_axis();
  const ActuationResult r = actuation_step(history_, target_, capsule_moment_, actuator_moment_,
                                           cfg_.controller, warm);
  setpoint_ = r.setpoint;
  errors_ = r.errors;
  desired_ = r.desired;
}

const LoopSnapshot& ClosedLoop::tick() {
  const double dt = 1.0 / cfg_.estimator_rate;
  world_ = step(world_, setpoint_, cfg_.dynamics, cfg_.environment, dt, cfg_.sim);
  ++tick_count_;
  // Keep the clock on the tick grid rather than accumulating dt.
  world_.time = tick_count_ * dt;

  const auto start = std::chrono::steady_clock::now();
  const SensorFrame frame = sense();
  estimate_ = track_step(estimate_, frame, PlacedMagnet{*cfg_.sim.actuator, world_.actuator_pose},
                         background_estimate_, cfg_.layout, cfg_.sim.capsule, cfg_.ekf);
  history_.push({estimate_.time, estimate_.position, estimate_.moment_direction()});
  const bool control_tick = tick_count_ % control_divider_ == 0;
  if (control_tick) control();
  refresh_snapshot(seconds_since(start), control_tick);
  return snapshot_;
}

void ClosedLoop::refresh_snapshot(double compute_time, bool control_tick) {
  LoopSnapshot& s = snapshot_;
  s.time = world_.time;
  s.world = world_;
  s.estimate = estimate_;
  s.target = target_;
  s.setpoint = setpoint_;
  s.errors = errors_;
  s.desired = desired_;
  s.position_error = (world_.probe_pose.position - target_.desired_position).norm();
  s.orientation_error = angle_between(world_.probe_pose.z_axis(), target_.desired_moment_dir);
  s.estimate_position_error = (estimate_.position - world_.probe_pose.position).norm();
  s.estimate_orientation_error = orientation_error(estimate_.full_pose.orientation, world_.probe_pose.orientation);
  s.compute_time = compute_time;
  s.control_tick = control_tick;
}

void ClosedLoop::set_target(const ControlTarget& target) {
  target.validate();
  target_ = target;
  snapshot_.target = target;
  snapshot_.position_error = (world_.probe_pose.position - target_.desired_position).norm();
  snapshot_.orientation_error = angle_between(world_.probe_pose.z_axis(), target_.desired_moment_dir);
}

void ClosedLoop::set_gains(const ControlGains& gains) {
  gains.validate();
  cfg_.controller.gains = gains;
}

void ClosedLoop::disturb(const Vec3& force, double duration) {
  world_ = apply_disturbance(world_, force, duration);
  snapshot_.world = world_;
}

}  // namespace magtee
