#include "magtee/control.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <ceres/ceres.h>

#include "magtee/errors.hpp"

namespace magtee {

namespace {

void require_diagonal_nonnegative(const Mat3& m, const char* name, bool strictly_positive) {
  const Mat3 off = m - Mat3(m.diagonal().asDiagonal());
  if (!m.allFinite() || off.cwiseAbs().maxCoeff() > 0.0) {
    throw ConfigError(std::string(name) + " must be a finite diagonal matrix");
  }
  const double lo = m.diagonal().minCoeff();
  if (strictly_positive ? !(lo > 0.0) : !(lo >= 0.0)) {
    throw ConfigError(std::string(name) + (strictly_positive ? " entries must be positive"
                                                             : " entries must be non-negative"));
  }
}

}  // namespace

ControlGains ControlGains::diagonal(const Vec3& kp, const Vec3& kd, const Vec3& kpo,
                                    const Vec3& kdo) {
  ControlGains g;
  g.kp = kp.asDiagonal();
  g.kd = kd.asDiagonal();
  g.kpo = kpo.asDiagonal();
  g.kdo = kdo.asDiagonal();
  return g;
}

void ControlGains::validate() const {
  require_diagonal_nonnegative(kp, "Kp", true);
  require_diagonal_nonnegative(kd, "Kd", false);
  require_diagonal_nonnegative(kpo, "Kpo", true);
  require_diagonal_nonnegative(kdo, "Kdo", false);
}

void ControlTarget::validate() const {
  if (!desired_position.allFinite()) throw DomainError("target position must be finite");
  if (std::abs(desired_moment_dir.norm() - 1.0) > 1e-9) {
    throw DomainError("target moment direction must be a unit vector");
  }
}

Mat3 DynamicsParams::cuboid_inertia(double mass, const Vec3& s) {
  const Vec3 sq = s.cwiseProduct(s);
  return (mass / 12.0) * Vec3(sq.y() + sq.z(), sq.x() + sq.z(), sq.x() + sq.y()).asDiagonal();
}

void DynamicsParams::validate() const {
  if (!(mass > 0.0)) throw ConfigError("probe mass must be positive");
  if (!inertia.allFinite() || (inertia - inertia.transpose()).cwiseAbs().maxCoeff() > 1e-15) {
    throw ConfigError("inertia must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(inertia);
  if (!(eig.eigenvalues().minCoeff() > 0.0)) throw ConfigError("inertia must be positive definite");
  if (!(friction_force >= 0.0)) throw ConfigError("friction force must be non-negative");
  if (!(tether_damping >= 0.0)) throw ConfigError("tether damping must be non-negative");
  if (!(rotational_damping >= 0.0)) throw ConfigError("rotational damping must be non-negative");
}

bool SafetyBox::contains(const Vec3& p, double tol) const {
  return (p.array() >= lower.array() - tol).all() && (p.array() <= upper.array() + tol).all();
}

Vec3 SafetyBox::clamp(const Vec3& p) const { return p.cwiseMax(lower).cwiseMin(upper); }

SafetyBox SafetyBoxConfig::around(const Vec3& capsule_position) const {
  SafetyBox box;
  box.lower = Vec3(-xy_half_extent, -xy_half_extent, capsule_position.z() + min_clearance);
  box.upper = Vec3(xy_half_extent, xy_half_extent, capsule_position.z() + max_clearance);
  return box;
}

void SafetyBoxConfig::validate() const {
  if (!(xy_half_extent > 0.0)) throw ConfigError("safety box half extent must be positive");
  if (!(min_clearance >= kMinCouplingDistance)) {
    throw ConfigError("safety box clearance must be at least the minimum coupling distance");
  }
  if (!(max_clearance > min_clearance)) throw ConfigError("safety box max clearance <= min");
}

// ------------------------------------------------------------ velocity

void PoseHistory::push(const PoseSample& s) {
  if (!samples_.empty() && s.t < samples_.back().t) {
    throw DomainError("pose history timestamps must be non-decreasing");
  }
  samples_.push_back(s);
  while (!samples_.empty() && samples_.front().t < s.t - max_age_) samples_.pop_front();
}

VelocityEstimate estimate_velocity(const PoseHistory& history, double window) {
  const auto& s = history.samples();
  VelocityEstimate out;
  if (s.size() < 2) return out;
  const double t_end = s.back().t;
  const double eps = 1e-9 * std::max(1.0, std::abs(t_end));
  std::size_t first = s.size() - 1;
  while (first > 0 && s[first - 1].t >= t_end - window - eps) --first;

  int count = 0;
  for (std::size_t i = first + 1; i < s.size(); ++i) {
    const double dt = s[i].t - s[i - 1].t;
    if (dt <= 0.0) continue;
    out.linear += (s[i].position - s[i - 1].position) / dt;
    out.moment_rate += (s[i].moment_dir - s[i - 1].moment_dir) / dt;
    ++count;
  }
  if (count == 0) return VelocityEstimate{};
  out.linear /= count;
  out.moment_rate /= count;
  out.cold_start = false;
  return out;
}

// -------------------------------------------------------------- errors

TrackingErrors compute_errors(const CapsuleKinematics& est, const ControlTarget& target) {
  TrackingErrors e;
  e.e_p = target.desired_position - est.position;
  e.e_p_dot = -est.velocity;
  e.e_o = est.moment_dir.cross(target.desired_moment_dir);
  e.e_o_dot = est.moment_rate.cross(target.desired_moment_dir);
  return e;
}

Vec3 orientation_error_vector(const Vec3& current, const Vec3& desired) {
  if (current.dot(desired) < -0.99) return any_perpendicular(current);
  return current.cross(desired);
}

Wrench desired_wrench(const TrackingErrors& e, const ControlGains& g, const DynamicsParams& dyn,
                      const Vec3& velocity) {
  Wrench w;
  w.force = g.kp * e.e_p + g.kd * e.e_p_dot - dyn.gravity_force();
  const double speed = velocity.norm();
  if (speed > kStickSpeed) w.force += dyn.friction_force * velocity / speed;
  w.torque = g.kpo * e.e_o + g.kdo * e.e_o_dot;
  return w;
}

// -------------------------------------------------------------- solver

namespace {

// Templated dipole force/torque on the capsule, used with automatic
// differentiation.
struct WrenchResidual {
  Vec3 f_d, tau_d, p_c, m_c;
  double actuator_moment;
  double lambda;

  template <typename T>
  bool operator()(const T* pa, const T* dir, T* res) const {
    using V = Eigen::Matrix<T, 3, 1>;
    const V d(dir[0], dir[1], dir[2]);
    const V m = (T(actuator_moment) / d.norm()) * d;
    const V r = p_c.cast<T>() - V(pa[0], pa[1], pa[2]);
    const V mc = m_c.cast<T>();
    const T r2 = r.squaredNorm();
    const T r5 = r2 * r2 * sqrt(r2);
    const T rm = r.dot(m);
    const T rmc = r.dot(mc);
    const V b = (T(1e-7) / r5) * (T(3.0) * rm * r - r2 * m);
    const V f = (T(3e-7) / r5) * (rm * (mc - (T(5.0) * rmc / r2) * r) + m.dot(mc) * r + rmc * m);
    const V tau = mc.cross(b);
    for (int k = 0; k < 3; ++k) {
      res[k] = f[k] - T(f_d[k]);
      res[3 + k] = T(lambda) * (tau[k] - T(tau_d[k]));
    }
    return true;
  }
};

struct MotionPenalty {
  Vec3 p_anchor, d_anchor;
  double w_p, w_d;

  template <typename T>
  bool operator()(const T* pa, const T* dir, T* res) const {
    using V = Eigen::Matrix<T, 3, 1>;
    const V d = V(dir[0], dir[1], dir[2]).normalized();
    for (int k = 0; k < 3; ++k) {
      res[k] = T(w_p) * (pa[k] - T(p_anchor[k]));
      res[3 + k] = T(w_d) * (d[k] - T(d_anchor[k]));
    }
    return true;
  }
};

ActuatorSetpoint solve_from(const Wrench& desired, const CapsuleMagnetState& capsule,
                            double actuator_moment, const SafetyBox& box, const Vec3& p0,
                            const Vec3& d0, const ActuatorSolverOptions& opts,
                            const ActuatorSetpoint* anchor = nullptr) {
  double pa[3] = {p0.x(), p0.y(), p0.z()};
  const Vec3 dn = d0.normalized();
  double dir[3] = {dn.x(), dn.y(), dn.z()};

  auto* functor = new WrenchResidual{desired.force, desired.torque, capsule.position,
                                     capsule.moment_magnitude * capsule.moment_dir.normalized(),
                                     actuator_moment, opts.torque_weight};
  ceres::Problem problem;
  problem.AddResidualBlock(new ceres::AutoDiffCostFunction<WrenchResidual, 6, 3, 3>(functor),
                           nullptr, pa, dir);
  if (anchor && (opts.motion_weight > 0.0 || opts.rotation_weight > 0.0)) {
    problem.AddResidualBlock(new ceres::AutoDiffCostFunction<MotionPenalty, 6, 3, 3>(new MotionPenalty{
                                 anchor->position, anchor->moment_dir, opts.motion_weight, opts.rotation_weight}),
                             nullptr, pa, dir);
  }
  problem.SetParameterization(dir, new ceres::HomogeneousVectorParameterization(3));
  for (int k = 0; k < 3; ++k) {
    problem.SetParameterLowerBound(pa, k, box.lower[k]);
    problem.SetParameterUpperBound(pa, k, box.upper[k]);
  }

  ceres::Solver::Options solver;
  solver.linear_solver_type = ceres::DENSE_QR;
  solver.max_num_iterations = opts.max_iterations;
  solver.function_tolerance = 1e-16;
  solver.gradient_tolerance = 1e-20;
  solver.parameter_tolerance = 1e-14;
  solver.logging_type = ceres::SILENT;
  ceres::Solver::Summary summary;
  ceres::Solve(solver, &problem, &summary);

  ActuatorSetpoint sp;
  sp.position = box.clamp(Vec3(pa[0], pa[1], pa[2]));
  sp.moment_dir = Vec3(dir[0], dir[1], dir[2]).normalized();
  sp.iterations = summary.num_successful_steps + summary.num_unsuccessful_steps;
  sp.residual = actuator_wrench_residual(desired, capsule, actuator_moment, sp.position,
                                         sp.moment_dir, opts.torque_weight)
                    .norm();
  return sp;
}

}  // namespace

Eigen::Matrix<double, 6, 1> actuator_wrench_residual(const Wrench& desired,
                                                     const CapsuleMagnetState& capsule,
                                                     double actuator_moment_magnitude,
                                                     const Vec3& actuator_position,
                                                     const Vec3& actuator_dir,
                                                     double torque_weight) {
  const Wrench w = dipole_wrench(capsule.moment_magnitude * capsule.moment_dir.normalized(),
                                 capsule.position,
                                 actuator_moment_magnitude * actuator_dir.normalized(),
                                 actuator_position);
  Eigen::Matrix<double, 6, 1> r;
  r.head<3>() = w.force - desired.force;
  r.tail<3>() = torque_weight * (w.torque - desired.torque);
  return r;
}

ActuatorSetpoint solve_actuator_pose(const Wrench& desired, const CapsuleMagnetState& capsule,
                                     double actuator_moment_magnitude, const SafetyBox& box,
                                     const ActuatorSetpoint& warm_start,
                                     const ActuatorSolverOptions& opts) {
  if (!desired.all_finite()) throw DomainError("desired wrench must be finite");
  if (!(box.upper.array() >= box.lower.array()).all()) throw DomainError("empty safety box");

  ActuatorSetpoint start = warm_start;
  start.position = box.clamp(warm_start.position);
  if (!start.moment_dir.allFinite() || start.moment_dir.norm() < 1e-12) {
    start.moment_dir = capsule.moment_dir;
  }
  start.moment_dir.normalize();
  start.residual = actuator_wrench_residual(desired, capsule, actuator_moment_magnitude,
                                            start.position, start.moment_dir, opts.torque_weight)
                       .norm();

  ActuatorSetpoint best = solve_from(desired, capsule, actuator_moment_magnitude, box,
                                     start.position, start.moment_dir, opts, &start);
  int total_iterations = best.iterations;

  if (opts.restarts && !(best.residual <= opts.restart_tolerance)) {
    // Screen a coarse grid of poses by residual alone, then polish the best few.
    std::vector<std::pair<double, std::pair<Vec3, Vec3>>> candidates;
    std::vector<Vec3> dirs = {Vec3::UnitX(), -Vec3::UnitX(), Vec3::UnitY(), -Vec3::UnitY(),
                              Vec3::UnitZ(), -Vec3::UnitZ()};
    for (int sx : {-1, 1})
      for (int sy : {-1, 1})
        for (int sz : {-1, 1}) dirs.push_back(Vec3(sx, sy, sz).normalized());
    dirs.push_back(capsule.moment_dir.normalized());
    dirs.push_back(-capsule.moment_dir.normalized());
    constexpr int kGrid = 3;
    for (int ix = 0; ix < kGrid; ++ix)
      for (int iy = 0; iy < kGrid; ++iy)
        for (int iz = 0; iz < kGrid; ++iz) {
          const Vec3 f(ix / double(kGrid - 1), iy / double(kGrid - 1), iz / double(kGrid - 1));
          const Vec3 p0 = box.lower + f.cwiseProduct(box.upper - box.lower);
          for (const Vec3& d : dirs) {
            const double r = actuator_wrench_residual(desired, capsule, actuator_moment_magnitude,
                                                      p0, d, opts.torque_weight)
                                 .norm();
            if (std::isfinite(r)) candidates.push_back({r, {p0, d}});
          }
        }
    const std::size_t keep = std::min<std::size_t>(opts.restart_count, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + keep, candidates.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t i = 0; i < keep && !(best.residual <= opts.restart_tolerance); ++i) {
      ActuatorSetpoint cand = solve_from(desired, capsule, actuator_moment_magnitude, box,
                                         candidates[i].second.first, candidates[i].second.second, opts);
      total_iterations += cand.iterations;
      if (cand.residual < best.residual) best = cand;
    }
  }

  if (!best.position.allFinite() || !best.moment_dir.allFinite() ||
      !std::isfinite(best.residual) || best.residual > start.residual) {
    start.fallback = true;
    start.infeasible = !(start.residual <= opts.infeasible_threshold);
    start.iterations = total_iterations;
    return start;
  }
  best.iterations = total_iterations;
  best.infeasible = !(best.residual <= opts.infeasible_threshold);
  return best;
}

// ----------------------------------------------------- clinical commands

std::string to_string(CommandKind kind) {
  switch (kind) {
    case CommandKind::advance: return "advance";
    case CommandKind::turn: return "turn";
    case CommandKind::anteflex: return "anteflex";
    case CommandKind::flex: return "flex";
    case CommandKind::set_absolute: return "set_absolute";
    case CommandKind::electronic_rotation: return "electronic_rotation";
  }
  return "unknown";
}

CommandKind command_kind_from_string(const std::string& name) {
  if (name == "advance") return CommandKind::advance;
  if (name == "turn") return CommandKind::turn;
  if (name == "anteflex") return CommandKind::anteflex;
  if (name == "flex") return CommandKind::flex;
  if (name == "set_absolute") return CommandKind::set_absolute;
  if (name == "electronic_rotation") return CommandKind::electronic_rotation;
  throw ConfigError("unknown clinical command '" + name + "'");
}

Pose clinical_command_to_pose(const Pose& current, const ClinicalCommand& cmd,
                              const CommandClamp& clamp) {
  if (!std::isfinite(cmd.amount)) throw DomainError("command amount must be finite");
  Pose next = current;
  switch (cmd.kind) {
    case CommandKind::advance:
      if (std::abs(cmd.amount) > clamp.max_translation) {
        throw ClampError("translation command exceeds the per-command clamp");
      }
      next.position += cmd.amount * current.x_axis();
      break;
    case CommandKind::turn:
    case CommandKind::anteflex:
    case CommandKind::flex: {
      if (std::abs(cmd.amount) > clamp.max_rotation) {
        throw ClampError("rotation command exceeds the per-command clamp");
      }
      const Mat3 body = cmd.kind == CommandKind::turn       ? rot_x(cmd.amount)
                        : cmd.kind == CommandKind::anteflex ? rot_y(cmd.amount)
                                                            : rot_z(cmd.amount);
      next.orientation = current.orientation * body;
      break;
    }
    case CommandKind::set_absolute: {
      if (!cmd.absolute) throw DomainError("set_absolute command without a target");
      cmd.absolute->validate();
      next.position = cmd.absolute->desired_position;
      next.orientation =
          rotation_between(current.z_axis(), cmd.absolute->desired_moment_dir) *
          current.orientation;
      break;
    }
    case CommandKind::electronic_rotation:
      // Imaging-plane rotation does not move the probe.
      break;
  }
  return next;
}

ControlTarget target_from_pose(const Pose& pose) {
  return ControlTarget{pose.position, pose.z_axis().normalized()};
}

ControlTarget clinical_command_to_target(const Pose& current, const ClinicalCommand& command,
                                         const CommandClamp& clamp) {
  return target_from_pose(clinical_command_to_pose(current, command, clamp));
}

// --------------------------------------------------------- actuation step

ActuationResult actuation_step(const PoseHistory& history, const ControlTarget& target,
                               double capsule_moment_magnitude,
                               double actuator_moment_magnitude, const ControllerConfig& cfg,
                               const ActuatorSetpoint& warm_start) {
  if (history.samples().empty()) throw DomainError("actuation needs at least one pose sample");
  const PoseSample& now = history.samples().back();

  ActuationResult out;
  out.velocity = estimate_velocity(history, cfg.velocity_window);

  CapsuleKinematics kin;
  kin.position = now.position;
  kin.moment_dir = now.moment_dir;
  kin.velocity = out.velocity.linear;
  kin.moment_rate = out.velocity.moment_rate;
  out.errors = compute_errors(kin, target);
  out.errors.e_o = orientation_error_vector(kin.moment_dir, target.desired_moment_dir);

  out.desired = desired_wrench(out.errors, cfg.gains, cfg.dynamics, out.velocity.linear);
  const Vec3 control_force = out.desired.force + cfg.dynamics.gravity_force();
  if (control_force.norm() > cfg.max_control_force) {
    out.desired.force = control_force * (cfg.max_control_force / control_force.norm()) -
                        cfg.dynamics.gravity_force();
  }

  const CapsuleMagnetState capsule{now.position, now.moment_dir, capsule_moment_magnitude};
  out.setpoint = solve_actuator_pose(out.desired, capsule, actuator_moment_magnitude,
                                     cfg.box.around(now.position), warm_start, cfg.solver);
  return out;
}

}  // namespace magtee
