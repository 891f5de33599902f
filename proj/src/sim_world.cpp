#include "magtee/sim_world.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "magtee/errors.hpp"

namespace magtee {

namespace {

constexpr double kContactTolerance = 1e-9;

struct Contact {
  Vec3 normal;  // outward, pointing into the wall
};

std::vector<Contact> active_contacts(const WorldState& s, const Environment& env, double* s_hint) {
  std::vector<Contact> out;
  const Vec3& p = s.probe_pose.position;
  if (const auto* ch = std::get_if<PlaneChannel>(&env.kind)) {
    if (p.z() >= ch->z_level + 0.5 * ch->gap - kContactTolerance) out.push_back({Vec3::UnitZ()});
    if (p.z() <= ch->z_level - 0.5 * ch->gap + kContactTolerance) out.push_back({-Vec3::UnitZ()});
  } else if (const auto* tube = std::get_if<Tube>(&env.kind)) {
    const auto c = tube->centerline->closest(p, *s_hint);
    *s_hint = c.s;
    if (c.distance >= tube->clearance() - kContactTolerance && c.distance > 0.0) {
      out.push_back({(p - c.point) / c.distance});
    }
  }
  return out;
}

// Clamps the position back into the admissible region and removes the
// outward velocity component at each wall touched (inelastic contact).
void project(WorldState& s, const Environment& env) {
  Vec3& p = s.probe_pose.position;
  Vec3& v = s.linear_velocity;
  if (const auto* ch = std::get_if<PlaneChannel>(&env.kind)) {
    const double top = ch->z_level + 0.5 * ch->gap, bottom = ch->z_level - 0.5 * ch->gap;
    if (p.z() > top) {
      p.z() = top;
      v.z() = std::min(v.z(), 0.0);
    } else if (p.z() < bottom) {
      p.z() = bottom;
      v.z() = std::max(v.z(), 0.0);
    }
  } else if (const auto* tube = std::get_if<Tube>(&env.kind)) {
    const auto c = tube->centerline->closest(p, s.centerline_s);
    s.centerline_s = c.s;
    const double clearance = tube->clearance();
    if (c.distance > clearance) {
      if (c.distance > clearance + tube->recovery_distance) {
        throw SimulationFault("probe left the tube beyond the recovery distance");
      }
      const Vec3 n = (p - c.point) / c.distance;
      p = c.point + clearance * n;
      const double vn = v.dot(n);
      if (vn > 0.0) v -= vn * n;
    }
  }
}

void move_actuator(Pose& actuator, const ActuatorSetpoint& sp, const ActuatorLimits& lim, double h) {
  const Vec3 delta = sp.position - actuator.position;
  const double dist = delta.norm();
  const double max_step = lim.max_speed * h;
  actuator.position = dist <= max_step ? sp.position : Vec3(actuator.position + delta * (max_step / dist));

  const Vec3 z = actuator.z_axis();
  const Vec3 target = sp.moment_dir.normalized();
  const double angle = std::atan2(z.cross(target).norm(), z.dot(target));
  if (angle <= 0.0) return;
  const Vec3 axis = z.cross(target).norm() > 1e-12 ? Vec3(z.cross(target).normalized()) : any_perpendicular(z);
  const double turn = std::min(angle, lim.max_rate * h);
  actuator.orientation = orthonormalize(exp_so3(turn * axis) * actuator.orientation);
}

Wrench magnetic_wrench(const WorldState& s, const SimConfig& cfg) {
  if (!cfg.actuator) return Wrench{};
  try {
    return dipole_wrench(moment_from_spec(cfg.capsule) * s.probe_pose.z_axis(), s.probe_pose.position,
                         moment_from_spec(*cfg.actuator) * s.actuator_pose.z_axis(),
                         s.actuator_pose.position);
  } catch (const ProximityError& e) {
    throw SimulationFault(std::string("magnets too close: ") + e.what());
  }
}

// Linear velocity update over `h` under force plus stick-slip friction and
// wall contact.
Vec3 linear_kick(const WorldState& s, const Vec3& applied, const DynamicsParams& dyn,
                 const Environment& env, double h, const SimConfig& cfg, double* s_hint) {
  Vec3 force = applied;
  if (cfg.damping) force -= dyn.tether_damping * s.linear_velocity;

  const auto contacts = active_contacts(s, env, s_hint);
  Vec3 tangential = force;
  for (const Contact& c : contacts) {
    const double push = tangential.dot(c.normal);
    if (push > 0.0) tangential -= push * c.normal;
  }

  const Vec3& v = s.linear_velocity;
  const double f_res = cfg.friction ? dyn.friction_force : 0.0;
  const double speed = v.norm();
  Vec3 v_new = Vec3::Zero();
  if (!(speed < kStickSpeed && tangential.norm() <= f_res)) {
    const Vec3 dir = speed >= kStickSpeed ? Vec3(v / speed)
                     : tangential.norm() > 0.0 ? Vec3(tangential.normalized())
                                               : Vec3::Zero();
    v_new = v + (h / dyn.mass) * tangential - (f_res * h / dyn.mass) * dir;
    // Kinetic friction slows the probe but never reverses it.
    if (v_new.dot(dir) < 0.0) v_new -= v_new.dot(dir) * dir;
  }
  for (const Contact& c : contacts) {
    const double vn = v_new.dot(c.normal);
    if (vn > 0.0) v_new -= vn * c.normal;
  }
  return v_new;
}

// Body-frame angular velocity update with implicit rotational damping.
Vec3 angular_kick(const WorldState& s, const Vec3& torque_world, const DynamicsParams& dyn,
                  double h, const SimConfig& cfg) {
  const Mat3& inertia = dyn.inertia;
  const Vec3& w = s.angular_velocity;
  const Vec3 tau_body = s.probe_pose.orientation.transpose() * torque_world;
  const double c_rot = cfg.damping ? dyn.rotational_damping : 0.0;
  const Mat3 lhs = inertia + c_rot * h * Mat3::Identity();
  return lhs.ldlt().solve(inertia * w + h * (tau_body - w.cross(inertia * w)));
}

Vec3 applied_force(const WorldState& s, const Wrench& mag, const DynamicsParams& dyn, double t) {
  Vec3 f = mag.force + dyn.gravity_force();
  if (s.disturbance && t < s.disturbance->expires_at) f += s.disturbance->force;
  return f;
}

// Kick-drift-kick substep: second-order energy behaviour for the
// conservative part, friction and contact applied inside each half kick.
void substep(WorldState& s, const ActuatorSetpoint& sp, const DynamicsParams& dyn,
             const Environment& env, double h, const SimConfig& cfg) {
  const double t0 = s.time;
  move_actuator(s.actuator_pose, sp, cfg.limits, h);

  Wrench mag = magnetic_wrench(s, cfg);
  s.linear_velocity = linear_kick(s, applied_force(s, mag, dyn, t0), dyn, env, 0.5 * h, cfg, &s.centerline_s);
  s.angular_velocity = angular_kick(s, mag.torque, dyn, 0.5 * h, cfg);

  s.probe_pose.position += h * s.linear_velocity;
  s.probe_pose.orientation = s.probe_pose.orientation * exp_so3(h * s.angular_velocity);
  s.time = t0 + h;
  project(s, env);

  mag = magnetic_wrench(s, cfg);
  s.linear_velocity = linear_kick(s, applied_force(s, mag, dyn, t0), dyn, env, 0.5 * h, cfg, &s.centerline_s);
  s.angular_velocity = angular_kick(s, mag.torque, dyn, 0.5 * h, cfg);
}

}  // namespace

Environment Environment::plane_channel(double z_level, double gap) {
  Environment e;
  e.kind = PlaneChannel{z_level, gap};
  e.validate();
  return e;
}

Environment Environment::tube(std::shared_ptr<const Centerline> centerline, double radius,
                              double probe_half_height) {
  Environment e;
  Tube t;
  t.centerline = std::move(centerline);
  t.radius = radius;
  t.probe_half_height = probe_half_height;
  e.kind = t;
  e.validate();
  return e;
}

void Environment::validate() const {
  if (const auto* ch = std::get_if<PlaneChannel>(&kind)) {
    if (!(ch->gap >= 0.0) || !std::isfinite(ch->z_level)) throw ConfigError("plane channel needs gap >= 0");
  } else if (const auto* t = std::get_if<Tube>(&kind)) {
    if (!t->centerline) throw ConfigError("tube environment without a centerline");
    if (!(t->radius > t->probe_half_height) || !(t->probe_half_height >= 0.0)) {
      throw ConfigError("tube radius must exceed the probe half-height");
    }
    if (!(t->recovery_distance > 0.0)) throw ConfigError("tube recovery distance must be positive");
  }
}

Environment load_centerline(const std::vector<Vec3>& points, double radius) {
  return Environment::tube(std::make_shared<const Centerline>(Centerline::fit(points)), radius);
}

WorldState step(const WorldState& state, const ActuatorSetpoint& setpoint, const DynamicsParams& dyn,
                const Environment& env, double dt, const SimConfig& cfg) {
  if (!(dt > 0.0 && dt <= 0.02)) throw DomainError("dt must lie in (0, 0.02] s");
  if (!(cfg.max_substep > 0.0)) throw ConfigError("max_substep must be positive");
  if (!setpoint.position.allFinite() || !setpoint.moment_dir.allFinite() ||
      setpoint.moment_dir.norm() < 1e-12) {
    throw DomainError("actuator setpoint must be finite with a nonzero direction");
  }

  WorldState s = state;
  const Vec3 v_start = s.linear_velocity;
  const int n = static_cast<int>(std::ceil(dt / cfg.max_substep - 1e-9));
  const double h = dt / n;
  const double t_end = state.time + dt;
  for (int i = 0; i < n; ++i) substep(s, setpoint, dyn, env, h, cfg);
  s.time = t_end;
  s.probe_pose.orientation = orthonormalize(s.probe_pose.orientation);
  if (!s.probe_pose.position.allFinite() || !s.linear_velocity.allFinite() ||
      !s.angular_velocity.allFinite()) {
    throw SimulationFault("non-finite probe state");
  }
  s.last_acceleration = (s.linear_velocity - v_start) / dt;
  if (s.disturbance && s.time >= s.disturbance->expires_at) s.disturbance.reset();
  return s;
}

WorldState apply_disturbance(const WorldState& state, const Vec3& force, double duration) {
  if (!(duration > 0.0)) throw DomainError("disturbance duration must be positive");
  if (!force.allFinite()) throw DomainError("disturbance force must be finite");
  WorldState s = state;
  s.disturbance = Disturbance{force, state.time + duration};
  return s;
}

double mechanical_energy(const WorldState& s, const DynamicsParams& dyn, const SimConfig& cfg) {
  const Vec3& w = s.angular_velocity;
  double e = 0.5 * dyn.mass * s.linear_velocity.squaredNorm() + 0.5 * w.dot(dyn.inertia * w) -
             dyn.gravity_force().dot(s.probe_pose.position);
  if (cfg.actuator) {
    e += dipole_interaction_energy(moment_from_spec(cfg.capsule) * s.probe_pose.z_axis(),
                                   s.probe_pose.position,
                                   moment_from_spec(*cfg.actuator) * s.actuator_pose.z_axis(),
                                   s.actuator_pose.position);
  }
  return e;
}

}  // namespace magtee
