#pragma once

// Closed-loop magnetic actuation: velocity estimation, PD wrench control and
// the constrained least-squares solve for the actuator magnet pose.

#include <deque>
#include <limits>
#include <optional>
#include <string>

#include "magtee/field_models.hpp"
#include "magtee/geometry.hpp"

namespace magtee {

/// Speed below which velocity direction is treated as undefined [m/s].
inline constexpr double kStickSpeed = 1e-3;

struct ControlGains {
  Mat3 kp = 5.0 * Mat3::Identity();      // N/m
  Mat3 kd = 1.0 * Mat3::Identity();      // N*s/m
  Mat3 kpo = 0.02 * Mat3::Identity();    // N*m/rad
  Mat3 kdo = 0.005 * Mat3::Identity();   // N*m*s/rad

  static ControlGains diagonal(const Vec3& kp, const Vec3& kd, const Vec3& kpo, const Vec3& kdo);
  /// Throws ConfigError for non-diagonal or negative gains, or zero Kp/Kpo entries.
  void validate() const;
};

struct ControlTarget {
  Vec3 desired_position = Vec3::Zero();
  Vec3 desired_moment_dir = Vec3::UnitZ();

  /// Throws DomainError unless desired_moment_dir is unit length within 1e-9.
  void validate() const;
};

struct ActuatorSetpoint {
  Vec3 position = Vec3::Zero();
  Vec3 moment_dir = Vec3::UnitZ();
  double residual = 0.0;     // weighted wrench residual norm at the optimum
  bool infeasible = false;   // residual above the configured threshold
  bool fallback = false;     // optimizer diverged; warm start returned
  int iterations = 0;
};

struct DynamicsParams {
  double mass = 0.040;                                 // kg
  Mat3 inertia = cuboid_inertia(0.040, Vec3(0.058, 0.016, 0.015));
  double friction_force = 0.3;                         // N
  double tether_damping = 0.05;                        // N*s/m
  double rotational_damping = 0.002;                   // N*m*s/rad

  Vec3 gravity_force() const { return mass * gravity_vector(); }
  /// Throws ConfigError if any invariant is violated.
  void validate() const;

  static Mat3 cuboid_inertia(double mass, const Vec3& sides);
};

/// Axis-aligned admissible region for the actuator position.
struct SafetyBox {
  Vec3 lower = Vec3::Constant(-1.0);
  Vec3 upper = Vec3::Constant(1.0);

  bool contains(const Vec3& p, double tol = 0.0) const;
  Vec3 clamp(const Vec3& p) const;
};

/// Safety box defined relative to the capsule height.
struct SafetyBoxConfig {
  double xy_half_extent = 0.35;
  double min_clearance = 0.12;
  double max_clearance = 0.40;

  SafetyBox around(const Vec3& capsule_position) const;
  void validate() const;
};

// ------------------------------------------------------------ velocity

struct PoseSample {
  double t = 0.0;
  Vec3 position = Vec3::Zero();
  Vec3 moment_dir = Vec3::UnitZ();
};

/// Time-ordered pose samples, trimmed to a maximum age.
class PoseHistory {
 public:
  explicit PoseHistory(double max_age = 1.0) : max_age_(max_age) {}

  void push(const PoseSample& s);
  void clear() { samples_.clear(); }
  const std::deque<PoseSample>& samples() const { return samples_; }

 private:
  double max_age_;
  std::deque<PoseSample> samples_;
};

struct VelocityEstimate {
  Vec3 linear = Vec3::Zero();       // m/s
  Vec3 moment_rate = Vec3::Zero();  // 1/s
  bool cold_start = true;
};

/// Mean of consecutive finite differences over the trailing `window` seconds.
/// Fewer than two samples in the window gives zeros with cold_start set.
VelocityEstimate estimate_velocity(const PoseHistory& history, double window = 0.2);

// -------------------------------------------------------------- errors

struct CapsuleKinematics {
  Vec3 position = Vec3::Zero();
  Vec3 moment_dir = Vec3::UnitZ();
  Vec3 velocity = Vec3::Zero();
  Vec3 moment_rate = Vec3::Zero();
};

struct TrackingErrors {
  Vec3 e_p = Vec3::Zero();
  Vec3 e_p_dot = Vec3::Zero();
  Vec3 e_o = Vec3::Zero();
  Vec3 e_o_dot = Vec3::Zero();
};

/// e_p = p_d - p_c, de_p = -v_c, e_o = m_c x m_d, de_o = dm_c/dt x m_d.
TrackingErrors compute_errors(const CapsuleKinematics& estimate, const ControlTarget& target);

/// Orientation error with the antipodal blind spot removed: when
/// m_c . m_d < -0.99 a unit error about a fixed perpendicular axis is used.
Vec3 orientation_error_vector(const Vec3& current, const Vec3& desired);

/// f_d = Kp e_p + Kd de_p - f_g + f_res v_hat (friction term only above
/// kStickSpeed), tau_d = Kpo e_o + Kdo de_o.
Wrench desired_wrench(const TrackingErrors& errors, const ControlGains& gains,
                      const DynamicsParams& dyn, const Vec3& velocity);

// -------------------------------------------------------------- solver

struct ActuatorSolverOptions {
  double torque_weight = 10.0;          // lambda [1/m]
  int max_iterations = 50;
  double infeasible_threshold = 0.05;   // weighted residual norm
  bool restarts = true;                 // global restarts when the warm start does not converge
  double restart_tolerance = 1e-9;      // residual treated as an exact solve
  int restart_count = 6;                // screened starting poses polished by the optimizer
  /// Penalties on moving away from the warm start [N/m] and on changing the
  /// moment direction [N per unit of direction change]. Zero disables them.
  double motion_weight = 0.0;
  double rotation_weight = 0.0;
};

struct CapsuleMagnetState {
  Vec3 position = Vec3::Zero();
  Vec3 moment_dir = Vec3::UnitZ();
  double moment_magnitude = 0.0;
};

/// Weighted residual vector [f - f_d; lambda (tau - tau_d)] for a given actuator pose.
Eigen::Matrix<double, 6, 1> actuator_wrench_residual(const Wrench& desired,
                                                     const CapsuleMagnetState& capsule,
                                                     double actuator_moment_magnitude,
                                                     const Vec3& actuator_position,
                                                     const Vec3& actuator_dir,
                                                     double torque_weight);

/// Best actuator pose inside `box` producing `desired` on the capsule.
ActuatorSetpoint solve_actuator_pose(const Wrench& desired, const CapsuleMagnetState& capsule,
                                     double actuator_moment_magnitude, const SafetyBox& box,
                                     const ActuatorSetpoint& warm_start,
                                     const ActuatorSolverOptions& opts = {});

// ----------------------------------------------------- clinical commands

enum class CommandKind { advance, turn, anteflex, flex, set_absolute, electronic_rotation };

/// One operator command. `amount` is metres for advance (negative withdraws)
/// and radians for the rotations (anteflex positive, retroflex negative;
/// flex positive to the left).
struct ClinicalCommand {
  CommandKind kind = CommandKind::advance;
  double amount = 0.0;
  std::optional<ControlTarget> absolute;
};

struct CommandClamp {
  double max_translation = 0.020;
  double max_rotation = deg2rad(20.0);
};

std::string to_string(CommandKind kind);
/// Throws ConfigError on unknown names.
CommandKind command_kind_from_string(const std::string& name);

/// New desired probe pose. Throws ClampError above the clamp.
Pose clinical_command_to_pose(const Pose& current, const ClinicalCommand& command,
                              const CommandClamp& clamp = {});

/// Target implied by a pose: its position and its z-axis.
ControlTarget target_from_pose(const Pose& pose);

ControlTarget clinical_command_to_target(const Pose& current, const ClinicalCommand& command,
                                         const CommandClamp& clamp = {});

// --------------------------------------------------------- actuation step

struct ControllerConfig {
  ControlGains gains;
  DynamicsParams dynamics;
  SafetyBoxConfig box;
  ActuatorSolverOptions solver;
  double velocity_window = 0.2;
  /// Upper bound on |f_d + f_g| (the part of the force request beyond gravity
  /// compensation), keeping requests inside the reachable wrench set.
  double max_control_force = std::numeric_limits<double>::infinity();
};

struct ActuationResult {
  ActuatorSetpoint setpoint;
  TrackingErrors errors;
  Wrench desired;
  VelocityEstimate velocity;
};

/// estimate_velocity -> compute_errors -> desired_wrench -> solve_actuator_pose.
ActuationResult actuation_step(const PoseHistory& history, const ControlTarget& target,
                               double capsule_moment_magnitude,
                               double actuator_moment_magnitude, const ControllerConfig& cfg,
                               const ActuatorSetpoint& warm_start);

}  // namespace magtee
