#pragma once

// Ground-truth rigid-body simulation of the probe: magnetic wrench, gravity,
// stick-slip friction, tether damping and environment contact.

#include <memory>
#include <optional>
#include <variant>

#include "magtee/centerline.hpp"
#include "magtee/control.hpp"
#include "magtee/field_models.hpp"

namespace magtee {

struct Disturbance {
  Vec3 force = Vec3::Zero();
  double expires_at = 0.0;
};

struct WorldState {
  double time = 0.0;
  Pose probe_pose;
  Vec3 linear_velocity = Vec3::Zero();
  Vec3 angular_velocity = Vec3::Zero();  // body frame
  Pose actuator_pose;
  std::optional<Disturbance> disturbance;
  /// Mean world-frame acceleration over the last step (what an IMU would feel, minus gravity).
  Vec3 last_acceleration = Vec3::Zero();
  /// Arc-length hint for tube contact queries.
  double centerline_s = 0.0;
};

struct FreeSpace {};

/// Two horizontal planes; the probe centre stays within z_level +- gap / 2.
struct PlaneChannel {
  double z_level = 0.1;
  double gap = 0.02;
};

struct Tube {
  std::shared_ptr<const Centerline> centerline;
  double radius = 0.010;
  double probe_half_height = 0.0075;
  /// Excursion beyond the wall that projection still repairs.
  double recovery_distance = 0.02;

  double clearance() const { return radius - probe_half_height; }
};

struct Environment {
  std::variant<FreeSpace, PlaneChannel, Tube> kind = FreeSpace{};

  static Environment free() { return {}; }
  static Environment plane_channel(double z_level, double gap);
  static Environment tube(std::shared_ptr<const Centerline> centerline, double radius = 0.010,
                          double probe_half_height = 0.0075);
  /// Throws ConfigError on a bad gap, radius or missing centerline.
  void validate() const;
};

/// Fits a centerline to the points and wraps it in a tube environment.
Environment load_centerline(const std::vector<Vec3>& points, double radius = 0.010);

struct ActuatorLimits {
  double max_speed = 0.25;  // m/s
  double max_rate = 1.5;    // rad/s
};

struct SimConfig {
  MagnetSpec capsule = default_capsule_magnet();
  /// Without an actuator magnet no magnetic wrench acts on the probe.
  std::optional<MagnetSpec> actuator = default_actuator_magnet();
  ActuatorLimits limits;
  double max_substep = 5e-4;  // s
  bool friction = true;
  bool damping = true;
};

/// Advances the world by dt in (0, 0.02]. Throws DomainError on a bad dt and
/// SimulationFault when the probe leaves the tube beyond the recovery
/// distance or the magnets come closer than the coupling limit.
WorldState step(const WorldState& state, const ActuatorSetpoint& setpoint,
                const DynamicsParams& dyn, const Environment& env, double dt,
                const SimConfig& cfg = {});

/// Registers a constant external force for `duration` seconds from now.
WorldState apply_disturbance(const WorldState& state, const Vec3& force, double duration);

/// Kinetic + gravitational + dipole interaction energy (friction-free check).
double mechanical_energy(const WorldState& state, const DynamicsParams& dyn, const SimConfig& cfg = {});

}  // namespace magtee
