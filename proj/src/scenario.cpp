#include "magtee/scenario.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include "magtee/errors.hpp"

namespace magtee {

using nlohmann::json;

namespace {

// ------------------------------------------------------------ json reading

void read_value(const json& j, double& out, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + ": expected a number");
  out = j.get<double>();
}

void read_value(const json& j, int& out, const std::string& where) {
  if (!j.is_number_integer()) throw ConfigError(where + ": expected an integer");
  out = j.get<int>();
}

void read_value(const json& j, bool& out, const std::string& where) {
  if (!j.is_boolean()) throw ConfigError(where + ": expected true or false");
  out = j.get<bool>();
}

void read_value(const json& j, std::string& out, const std::string& where) {
  if (!j.is_string()) throw ConfigError(where + ": expected a string");
  out = j.get<std::string>();
}

void read_value(const json& j, Vec3& out, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(where + ": expected [x, y, z]");
  for (int i = 0; i < 3; ++i) read_value(j[i], out[i], where);
}

void read_value(const json& j, std::vector<double>& out, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array of numbers");
  out.clear();
  for (const auto& v : j) {
    double d = 0.0;
    read_value(v, d, where);
    out.push_back(d);
  }
}

void read_value(const json& j, std::vector<Vec3>& out, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array of [x, y, z]");
  out.clear();
  for (const auto& v : j) {
    Vec3 p;
    read_value(v, p, where);
    out.push_back(p);
  }
}

void read_value(const json& j, std::optional<double>& out, const std::string& where) {
  if (j.is_null()) {
    out.reset();
    return;
  }
  double d = 0.0;
  read_value(j, d, where);
  out = d;
}

/// Object reader that remembers which keys were consumed so that leftovers
/// can be reported.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  const json* get(const char* key) {
    used_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const json& require(const char* key) {
    const json* v = get(key);
    if (!v) throw ConfigError(where_ + ": missing required key '" + key + "'");
    return *v;
  }

  template <class T>
  void opt(const char* key, T& out) {
    if (const json* v = get(key)) read_value(*v, out, path(key));
  }

  template <class T>
  void req(const char* key, T& out) {
    read_value(require(key), out, path(key));
  }

  std::string path(const char* key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!used_.count(key)) throw ConfigError(where_ + ": unknown key '" + key + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> used_;
};

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// ------------------------------------------------------------ pieces

json magnet_to_json(const MagnetSpec& m) {
  if (m.is_cylinder()) {
    const CylinderShape& c = m.as_cylinder();
    return {{"shape", "cylinder"}, {"radius", c.radius}, {"half_length", c.half_length},
            {"remanence", m.remanence()}};
  }
  const CuboidShape& c = std::get<CuboidShape>(m.shape());
  return {{"shape", "cuboid"}, {"sides", vec_json(c.sides)}, {"remanence", m.remanence()}};
}

MagnetSpec magnet_from_json(const json& j, const std::string& where) {
  ObjectReader r(j, where);
  std::string shape;
  double remanence = 0.0;
  r.req("shape", shape);
  r.req("remanence", remanence);
  try {
    if (shape == "cylinder") {
      double radius = 0.0, half_length = 0.0;
      r.req("radius", radius);
      r.req("half_length", half_length);
      r.finish();
      return MagnetSpec::cylinder(radius, half_length, remanence);
    }
    if (shape == "cuboid") {
      Vec3 sides;
      r.req("sides", sides);
      r.finish();
      return MagnetSpec::cuboid(sides.x(), sides.y(), sides.z(), remanence);
    }
  } catch (const DomainError& e) {
    throw ConfigError(where + ": " + e.what());
  }
  throw ConfigError(where + ".shape: expected 'cylinder' or 'cuboid'");
}

json pose_to_json(const Pose& p) {
  const EulerAngles e = p.euler();
  return {{"position", vec_json(p.position)}, {"euler", json::array({e.roll, e.pitch, e.yaw})}};
}

Pose pose_from_json(const json& j, const std::string& where) {
  ObjectReader r(j, where);
  Vec3 position, euler = Vec3::Zero();
  r.req("position", position);
  r.opt("euler", euler);
  r.finish();
  return Pose::from_euler(position, EulerAngles{euler.x(), euler.y(), euler.z()});
}

json gains_to_json(const ControlGains& g) {
  return {{"kp", vec_json(g.kp.diagonal())},
          {"kd", vec_json(g.kd.diagonal())},
          {"kpo", vec_json(g.kpo.diagonal())},
          {"kdo", vec_json(g.kdo.diagonal())}};
}

ControlGains gains_from_json(const json& j, const std::string& where) {
  ObjectReader r(j, where);
  ControlGains g;
  Vec3 kp = g.kp.diagonal(), kd = g.kd.diagonal(), kpo = g.kpo.diagonal(), kdo = g.kdo.diagonal();
  r.opt("kp", kp);
  r.opt("kd", kd);
  r.opt("kpo", kpo);
  r.opt("kdo", kdo);
  r.finish();
  return ControlGains::diagonal(kp, kd, kpo, kdo);
}

json dynamics_to_json(const DynamicsParams& d) {
  return {{"mass", d.mass},
          {"inertia_diagonal", vec_json(d.inertia.diagonal())},
          {"friction_force", d.friction_force},
          {"tether_damping", d.tether_damping},
          {"rotational_damping", d.rotational_damping}};
}

DynamicsParams dynamics_from_json(const json& j, const std::string& where) {
  ObjectReader r(j, where);
  DynamicsParams d;
  Vec3 inertia = d.inertia.diagonal();
  r.opt("mass", d.mass);
  r.opt("inertia_diagonal", inertia);
  r.opt("friction_force", d.friction_force);
  r.opt("tether_damping", d.tether_damping);
  r.opt("rotational_damping", d.rotational_damping);
  r.finish();
  d.inertia = inertia.asDiagonal();
  return d;
}

json controller_to_json(const ControllerConfig& c) {
  const ActuatorSolverOptions& s = c.solver;
  return {{"gains", gains_to_json(c.gains)},
          {"dynamics", dynamics_to_json(c.dynamics)},
          {"box", {{"xy_half_extent", c.box.xy_half_extent},
                   {"min_clearance", c.box.min_clearance},
                   {"max_clearance", c.box.max_clearance}}},
          {"solver", {{"torque_weight", s.torque_weight},
                      {"max_iterations", s.max_iterations},
                      {"infeasible_threshold", s.infeasible_threshold},
                      {"restarts", s.restarts},
                      {"restart_tolerance", s.restart_tolerance},
                      {"restart_count", s.restart_count},
                      {"motion_weight", s.motion_weight},
                      {"rotation_weight", s.rotation_weight}}},
          {"velocity_window", c.velocity_window},
          {"max_control_force", std::isfinite(c.max_control_force) ? json(c.max_control_force) : json(nullptr)}};
}

ControllerConfig controller_from_json(const json& j, const std::string& where) {
  ObjectReader r(j, where);
  ControllerConfig c;
  if (const json* g = r.get("gains")) c.gains = gains_from_json(*g, r.path("gains"));
  if (const json* d = r.get("dynamics")) c.dynamics = dynamics_from_json(*d, r.path("dynamics"));
  if (const json* b = r.get("box")) {
    ObjectReader br(*b, r.path("box"));
    br.opt("xy_half_extent", c.box.xy_half_extent);
    br.opt("min_clearance", c.box.min_clearance);
    br.opt("max_clearance", c.box.max_clearance);
    br.finish();
  }
  if (const json* s = r.get("solver")) {
    ObjectReader sr(*s, r.path("solver"));
    sr.opt("torque_weight", c.solver.torque_weight);
    sr.opt("max_iterations", c.solver.max_iterations);
    sr.opt("infeasible_threshold", c.solver.infeasible_threshold);
    sr.opt("restarts", c.solver.restarts);
    sr.opt("restart_tolerance", c.solver.restart_tolerance);
    sr.opt("restart_count", c.solver.restart_count);
    sr.opt("motion_weight", c.solver.motion_weight);
    sr.opt("rotation_weight", c.solver.rotation_weight);
    sr.finish();
  }
  r.opt("velocity_window", c.velocity_window);
  std::optional<double> fmax;
  r.opt("max_control_force", fmax);
  c.max_control_force = fmax ? *fmax : std::numeric_limits<double>::infinity();
  r.finish();
  return c;
}

json ls_to_json(const LsOptions& o) {
  return {{"grid_points", o.grid_points},
          {"grid_half_extent", o.grid_half_extent},
          {"grid_height", o.grid_height},
          {"yaw_starts", o.yaw_starts},
          {"max_iterations", o.max_iterations},
          {"gradient_tolerance", o.gradient_tolerance},
          {"noise_sigma", o.noise_sigma},
          {"max_rms_sigmas", o.max_rms_sigmas},
          {"workspace_half_extent", o.workspace_half_extent},
          {"min_z", o.min_z},
          {"max_z", o.max_z}};
}

LsOptions ls_from_json(const json& j, const std::string& where) {
  ObjectReader r(j, where);
  LsOptions o;
  r.opt("grid_points", o.grid_points);
  r.opt("grid_half_extent", o.grid_half_extent);
  r.opt("grid_height", o.grid_height);
  r.opt("yaw_starts", o.yaw_starts);
  r.opt("max_iterations", o.max_iterations);
  r.opt("gradient_tolerance", o.gradient_tolerance);
  r.opt("noise_sigma", o.noise_sigma);
  r.opt("max_rms_sigmas", o.max_rms_sigmas);
  r.opt("workspace_half_extent", o.workspace_half_extent);
  r.opt("min_z", o.min_z);
  r.opt("max_z", o.max_z);
  r.finish();
  return o;
}

json command_to_json(const ClinicalCommand& c) {
  json j = {{"kind", to_string(c.kind)}, {"amount", c.amount}};
  if (c.absolute) {
    j["target"] = {{"position", vec_json(c.absolute->desired_position)},
                   {"moment", vec_json(c.absolute->desired_moment_dir)}};
  }
  return j;
}

ClinicalCommand command_from_json(const json& j, const std::string& where) {
  ObjectReader r(j, where);
  ClinicalCommand c;
  std::string kind;
  r.req("kind", kind);
  c.kind = command_kind_from_string(kind);
  r.opt("amount", c.amount);
  if (const json* t = r.get("target")) {
    ObjectReader tr(*t, r.path("target"));
    ControlTarget target;
    tr.req("position", target.desired_position);
    tr.req("moment", target.desired_moment_dir);
    tr.finish();
    c.absolute = target;
  }
  r.finish();
  if (c.kind == CommandKind::set_absolute && !c.absolute) {
    throw ConfigError(where + ": set_absolute needs a target");
  }
  return c;
}

json trajectory_to_json(const Trajectory& t) {
  if (const auto* s = std::get_if<SpiralTrajectory>(&t)) {
    return {{"type", "spiral"},
            {"center", vec_json(s->center)},
            {"radius", s->radius},
            {"rise_per_turn", s->rise_per_turn},
            {"speed", s->speed},
            {"tilt", s->tilt}};
  }
  if (const auto* g = std::get_if<GridTrajectory>(&t)) {
    json points = json::array();
    for (const Vec3& p : g->points) points.push_back(vec_json(p));
    return {{"type", "grid"},
            {"heights", g->heights},
            {"points", points},
            {"tilt", g->tilt},
            {"yaw", g->yaw},
            {"dwell", g->dwell},
            {"actuator_height", g->actuator_height},
            {"actuator_half_span", g->actuator_half_span},
            {"actuator_amplitude", g->actuator_amplitude},
            {"actuator_period", g->actuator_period}};
  }
  const auto& k = std::get<TrackingTrajectory>(t);
  json j = {{"type", "tracking"},
            {"path", k.path == TrackingTrajectory::Path::line ? "line" : "centerline"},
            {"initial_probe", pose_to_json(k.initial_probe)},
            {"initial_actuator", pose_to_json(k.initial_actuator)}};
  if (k.path == TrackingTrajectory::Path::line) {
    j["line_start"] = vec_json(k.line_start);
    j["line_velocity"] = vec_json(k.line_velocity);
    j["line_moment"] = vec_json(k.line_moment);
  } else {
    j["centerline_speed"] = k.centerline_speed;
  }
  json dist = json::array();
  for (const auto& d : k.disturbances) {
    dist.push_back({{"time", d.time}, {"force", vec_json(d.force)}, {"duration", d.duration}});
  }
  j["disturbances"] = dist;
  json holds = json::array();
  for (const auto& h : k.hold_commands) {
    holds.push_back({{"time", h.time}, {"command", command_to_json(h.command)}});
  }
  j["hold_commands"] = holds;
  return j;
}

Trajectory trajectory_from_json(const json& j, const std::string& where) {
  ObjectReader r(j, where);
  std::string type;
  r.req("type", type);
  if (type == "spiral") {
    SpiralTrajectory s;
    r.opt("center", s.center);
    r.opt("radius", s.radius);
    r.opt("rise_per_turn", s.rise_per_turn);
    r.opt("speed", s.speed);
    r.opt("tilt", s.tilt);
    r.finish();
    return s;
  }
  if (type == "grid") {
    GridTrajectory g;
    r.opt("heights", g.heights);
    r.req("points", g.points);
    r.opt("tilt", g.tilt);
    r.opt("yaw", g.yaw);
    r.opt("dwell", g.dwell);
    r.opt("actuator_height", g.actuator_height);
    r.opt("actuator_half_span", g.actuator_half_span);
    r.opt("actuator_amplitude", g.actuator_amplitude);
    r.opt("actuator_period", g.actuator_period);
    r.finish();
    return g;
  }
  if (type == "tracking") {
    TrackingTrajectory k;
    std::string path = "line";
    r.opt("path", path);
    if (path == "line") {
      k.path = TrackingTrajectory::Path::line;
    } else if (path == "centerline") {
      k.path = TrackingTrajectory::Path::centerline;
    } else {
      throw ConfigError(r.path("path") + ": expected 'line' or 'centerline'");
    }
    k.initial_probe = pose_from_json(r.require("initial_probe"), r.path("initial_probe"));
    k.initial_actuator = pose_from_json(r.require("initial_actuator"), r.path("initial_actuator"));
    r.opt("line_start", k.line_start);
    r.opt("line_velocity", k.line_velocity);
    r.opt("line_moment", k.line_moment);
    r.opt("centerline_speed", k.centerline_speed);
    if (const json* d = r.get("disturbances")) {
      if (!d->is_array()) throw ConfigError(r.path("disturbances") + ": expected an array");
      for (const auto& e : *d) {
        ObjectReader er(e, r.path("disturbances[]"));
        DisturbanceEvent ev;
        er.req("time", ev.time);
        er.req("force", ev.force);
        er.req("duration", ev.duration);
        er.finish();
        k.disturbances.push_back(ev);
      }
    }
    if (const json* h = r.get("hold_commands")) {
      if (!h->is_array()) throw ConfigError(r.path("hold_commands") + ": expected an array");
      for (const auto& e : *h) {
        ObjectReader hr(e, r.path("hold_commands[]"));
        HoldCommand hc;
        hr.req("time", hc.time);
        hc.command = command_from_json(hr.require("command"), hr.path("command"));
        hr.finish();
        k.hold_commands.push_back(hc);
      }
    }
    r.finish();
    return k;
  }
  throw ConfigError(r.path("type") + ": expected 'spiral', 'grid' or 'tracking'");
}

json acceptance_to_json(const AcceptanceSpec& a) {
  return {{"window_start", a.window_start},
          {"window_end", a.window_end >= 1e300 ? json(nullptr) : json(a.window_end)},
          {"max_mean_position_error", optional_json(a.max_mean_position_error)},
          {"max_mean_orientation_error", optional_json(a.max_mean_orientation_error)},
          {"ekf_not_worse_than_ls", a.ekf_not_worse_than_ls},
          {"max_axis_position_error", optional_json(a.max_axis_position_error)},
          {"max_grid_orientation_error", optional_json(a.max_grid_orientation_error)},
          {"grid_min_height", a.grid_min_height},
          {"grid_max_height", a.grid_max_height},
          {"max_recovery_time", optional_json(a.max_recovery_time)},
          {"recovery_window", a.recovery_window},
          {"recovery_position_error", a.recovery_position_error},
          {"recovery_orientation_error", a.recovery_orientation_error},
          {"max_final_orientation_error", optional_json(a.max_final_orientation_error)},
          {"final_window", a.final_window}};
}

AcceptanceSpec acceptance_from_json(const json& j, const std::string& where) {
  ObjectReader r(j, where);
  AcceptanceSpec a;
  r.opt("window_start", a.window_start);
  std::optional<double> end;
  r.opt("window_end", end);
  a.window_end = end ? *end : 1e300;
  r.opt("max_mean_position_error", a.max_mean_position_error);
  r.opt("max_mean_orientation_error", a.max_mean_orientation_error);
  r.opt("ekf_not_worse_than_ls", a.ekf_not_worse_than_ls);
  r.opt("max_axis_position_error", a.max_axis_position_error);
  r.opt("max_grid_orientation_error", a.max_grid_orientation_error);
  r.opt("grid_min_height", a.grid_min_height);
  r.opt("grid_max_height", a.grid_max_height);
  r.opt("max_recovery_time", a.max_recovery_time);
  r.opt("recovery_window", a.recovery_window);
  r.opt("recovery_position_error", a.recovery_position_error);
  r.opt("recovery_orientation_error", a.recovery_orientation_error);
  r.opt("max_final_orientation_error", a.max_final_orientation_error);
  r.opt("final_window", a.final_window);
  r.finish();
  return a;
}

json environment_to_json(const EnvironmentConfig& e) {
  switch (e.kind) {
    case EnvironmentConfig::Kind::free:
      return {{"type", "free"}};
    case EnvironmentConfig::Kind::plane_channel:
      return {{"type", "plane_channel"}, {"z_level", e.z_level}, {"gap", e.gap}};
    case EnvironmentConfig::Kind::tube: {
      json pts = json::array();
      for (const Vec3& p : e.centerline) pts.push_back(vec_json(p));
      return {{"type", "tube"}, {"radius", e.radius}, {"probe_half_height", e.probe_half_height},
              {"centerline", pts}};
    }
  }
  return {};
}

EnvironmentConfig environment_from_json(const json& j, const std::string& where, const std::string& base_dir) {
  ObjectReader r(j, where);
  EnvironmentConfig e;
  std::string type;
  r.req("type", type);
  if (type == "free") {
    e.kind = EnvironmentConfig::Kind::free;
  } else if (type == "plane_channel") {
    e.kind = EnvironmentConfig::Kind::plane_channel;
    r.opt("z_level", e.z_level);
    r.opt("gap", e.gap);
  } else if (type == "tube") {
    e.kind = EnvironmentConfig::Kind::tube;
    r.opt("radius", e.radius);
    r.opt("probe_half_height", e.probe_half_height);
    const json* inline_points = r.get("centerline");
    const json* file = r.get("centerline_file");
    if ((inline_points != nullptr) == (file != nullptr)) {
      throw ConfigError(where + ": a tube needs exactly one of 'centerline' or 'centerline_file'");
    }
    if (inline_points) {
      read_value(*inline_points, e.centerline, r.path("centerline"));
    } else {
      std::string name;
      read_value(*file, name, r.path("centerline_file"));
      std::filesystem::path p(name);
      if (p.is_relative() && !base_dir.empty()) p = std::filesystem::path(base_dir) / p;
      e.centerline = load_centerline_file(p.string());
    }
  } else {
    throw ConfigError(r.path("type") + ": expected 'free', 'plane_channel' or 'tube'");
  }
  r.finish();
  return e;
}

}  // namespace

Environment EnvironmentConfig::build() const {
  switch (kind) {
    case Kind::free:
      return Environment::free();
    case Kind::plane_channel:
      return Environment::plane_channel(z_level, gap);
    case Kind::tube:
      try {
        return Environment::tube(std::make_shared<const Centerline>(Centerline::fit(centerline)), radius,
                                 probe_half_height);
      } catch (const DomainError& e) {
        throw ConfigError(std::string("centerline: ") + e.what());
      }
  }
  return Environment::free();
}

ScenarioKind Scenario::kind() const {
  if (std::holds_alternative<SpiralTrajectory>(trajectory)) return ScenarioKind::spiral_localization;
  if (std::holds_alternative<GridTrajectory>(trajectory)) return ScenarioKind::static_grid;
  return ScenarioKind::closed_loop;
}

std::string to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::spiral_localization:
      return "spiral_localization";
    case ScenarioKind::static_grid:
      return "static_grid";
    case ScenarioKind::closed_loop:
      return "closed_loop";
  }
  return "";
}

void Scenario::validate() const {
  if (name.empty()) throw ConfigError("scenario needs a name");
  if (seeds.empty()) throw ConfigError("scenario needs at least one seed");
  if (!(duration >= 0.0) || !std::isfinite(duration)) throw ConfigError("duration must be finite and >= 0");
  array.layout().validate();
  EkfConfig e = ekf;
  e.dt = 1.0 / estimator_rate;
  e.validate();
  switch (kind()) {
    case ScenarioKind::spiral_localization: {
      const auto& s = std::get<SpiralTrajectory>(trajectory);
      if (!(estimator_rate > 0.0) || 1.0 / estimator_rate > 0.02) {
        throw ConfigError("estimator rate must be at least 50 Hz");
      }
      if (!(s.radius > 0.0) || !(s.speed > 0.0) || !(s.rise_per_turn >= 0.0)) {
        throw ConfigError("spiral needs radius > 0, speed > 0 and rise >= 0");
      }
      break;
    }
    case ScenarioKind::static_grid: {
      const auto& g = std::get<GridTrajectory>(trajectory);
      if (!actuator) throw ConfigError("static grid scenario needs an actuator magnet");
      if (!(estimator_rate > 0.0) || 1.0 / estimator_rate > 0.02) {
        throw ConfigError("estimator rate must be at least 50 Hz");
      }
      if (g.heights.empty() || g.points.empty()) throw ConfigError("grid needs heights and points");
      if (!(g.dwell > 0.0) || !(g.actuator_period > 0.0)) throw ConfigError("grid dwell and period must be positive");
      break;
    }
    case ScenarioKind::closed_loop: {
      const auto& k = std::get<TrackingTrajectory>(trajectory);
      loop_config(seeds.front()).validate();
      if (k.path == TrackingTrajectory::Path::centerline && environment.kind != EnvironmentConfig::Kind::tube) {
        throw ConfigError("a centerline path needs a tube environment");
      }
      if (k.path == TrackingTrajectory::Path::line && std::abs(k.line_moment.norm() - 1.0) > 1e-9) {
        throw ConfigError("line_moment must be a unit vector");
      }
      for (const auto& d : k.disturbances) {
        if (!(d.duration > 0.0) || !d.force.allFinite()) throw ConfigError("disturbances need finite force and duration > 0");
      }
      for (std::size_t i = 1; i < k.hold_commands.size(); ++i) {
        if (k.hold_commands[i].time <= k.hold_commands[i - 1].time) {
          throw ConfigError("hold commands must be in increasing time order");
        }
      }
      break;
    }
  }
}

ClosedLoopConfig Scenario::loop_config(std::uint64_t seed) const {
  ClosedLoopConfig c;
  c.layout = array.layout();
  c.sim.capsule = capsule;
  c.sim.actuator = actuator;
  c.dynamics = dynamics;
  c.environment = environment.build();
  c.imu = imu;
  c.ekf = ekf;
  c.ekf.dt = 1.0 / estimator_rate;
  c.ls = ls;
  c.controller = controller;
  c.estimator_rate = estimator_rate;
  c.control_rate = control_rate;
  c.seed = seed;
  c.background_field = background_field;
  return c;
}

json scenario_to_json(const Scenario& s) {
  json seeds = json::array();
  for (auto v : s.seeds) seeds.push_back(v);
  const Eigen::Vector4d q = s.ekf.process_noise.diagonal();
  return {{"name", s.name},
          {"description", s.description},
          {"seeds", seeds},
          {"duration", s.duration},
          {"rates", {{"estimator", s.estimator_rate}, {"control", s.control_rate}}},
          {"array", {{"nx", s.array.nx}, {"ny", s.array.ny}, {"spacing", s.array.spacing},
                     {"height", s.array.height}, {"noise_sigma", s.array.noise_sigma}}},
          {"capsule_magnet", magnet_to_json(s.capsule)},
          {"actuator_magnet", s.actuator ? magnet_to_json(*s.actuator) : json(nullptr)},
          {"ekf", {{"process_noise", json::array({q[0], q[1], q[2], q[3]})},
                   {"measurement_noise_sigma", s.ekf.measurement_noise_sigma}}},
          {"ls", ls_to_json(s.ls)},
          {"imu", {{"accel_sigma", s.imu.accel_sigma}, {"gyro_sigma", s.imu.gyro_sigma},
                   {"attitude_sigma", s.imu.attitude_sigma}}},
          {"dynamics", dynamics_to_json(s.dynamics)},
          {"controller", controller_to_json(s.controller)},
          {"environment", environment_to_json(s.environment)},
          {"background_field", s.background_field},
          {"steady_state_start", s.steady_state_start},
          {"trajectory", trajectory_to_json(s.trajectory)},
          {"acceptance", acceptance_to_json(s.acceptance)}};
}

Scenario scenario_from_json(const json& j, const std::string& base_dir) {
  ObjectReader r(j, "scenario");
  Scenario s;
  r.req("name", s.name);
  r.opt("description", s.description);
  if (const json* seeds = r.get("seeds")) {
    if (!seeds->is_array()) throw ConfigError("scenario.seeds: expected an array");
    s.seeds.clear();
    for (const auto& v : *seeds) {
      if (!v.is_number_unsigned()) throw ConfigError("scenario.seeds: expected non-negative integers");
      s.seeds.push_back(v.get<std::uint64_t>());
    }
  }
  r.req("duration", s.duration);
  if (const json* rates = r.get("rates")) {
    ObjectReader rr(*rates, "scenario.rates");
    rr.opt("estimator", s.estimator_rate);
    rr.opt("control", s.control_rate);
    rr.finish();
  }
  if (const json* a = r.get("array")) {
    ObjectReader ar(*a, "scenario.array");
    ar.opt("nx", s.array.nx);
    ar.opt("ny", s.array.ny);
    ar.opt("spacing", s.array.spacing);
    ar.opt("height", s.array.height);
    ar.opt("noise_sigma", s.array.noise_sigma);
    ar.finish();
  }
  if (const json* m = r.get("capsule_magnet")) s.capsule = magnet_from_json(*m, "scenario.capsule_magnet");
  if (const json* m = r.get("actuator_magnet")) {
    if (m->is_null()) {
      s.actuator.reset();
    } else {
      s.actuator = magnet_from_json(*m, "scenario.actuator_magnet");
    }
  }
  if (const json* e = r.get("ekf")) {
    ObjectReader er(*e, "scenario.ekf");
    std::vector<double> q;
    er.opt("process_noise", q);
    if (er.has("process_noise")) {
      if (q.size() != 4) throw ConfigError("scenario.ekf.process_noise: expected 4 diagonal entries");
      s.ekf.process_noise = Eigen::Vector4d(q[0], q[1], q[2], q[3]).asDiagonal();
    }
    er.opt("measurement_noise_sigma", s.ekf.measurement_noise_sigma);
    er.finish();
  }
  if (const json* l = r.get("ls")) s.ls = ls_from_json(*l, "scenario.ls");
  if (const json* i = r.get("imu")) {
    ObjectReader ir(*i, "scenario.imu");
    ir.opt("accel_sigma", s.imu.accel_sigma);
    ir.opt("gyro_sigma", s.imu.gyro_sigma);
    ir.opt("attitude_sigma", s.imu.attitude_sigma);
    ir.finish();
  }
  if (const json* d = r.get("dynamics")) s.dynamics = dynamics_from_json(*d, "scenario.dynamics");
  if (const json* c = r.get("controller")) s.controller = controller_from_json(*c, "scenario.controller");
  if (const json* e = r.get("environment")) s.environment = environment_from_json(*e, "scenario.environment", base_dir);
  r.opt("background_field", s.background_field);
  r.opt("steady_state_start", s.steady_state_start);
  s.trajectory = trajectory_from_json(r.require("trajectory"), "scenario.trajectory");
  if (const json* a = r.get("acceptance")) s.acceptance = acceptance_from_json(*a, "scenario.acceptance");
  r.finish();
  s.ekf.dt = 1.0 / s.estimator_rate;
  s.validate();
  return s;
}

Scenario load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("scenario file " + path + ": " + e.what());
  }
  return scenario_from_json(j, std::filesystem::path(path).parent_path().string());
}

std::vector<Vec3> load_centerline_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open centerline file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("centerline file " + path + ": " + e.what());
  }
  ObjectReader r(j, "centerline");
  std::vector<Vec3> points;
  r.req("points", points);
  r.finish();
  return points;
}

// ------------------------------------------------------------ builtins

namespace {

Scenario spiral_localization() {
  Scenario s;
  s.name = "spiral_localization";
  s.description = "Probe carried along a tilted 3-D spiral at 10 mm/s above the array; no actuator.";
  s.seeds = {1, 2, 3};
  s.duration = 40.0;
  s.actuator.reset();
  s.ekf.process_noise = Eigen::Vector4d(1e-6, 1e-6, 1e-6, 1e-5).asDiagonal();
  s.trajectory = SpiralTrajectory{};
  s.acceptance.max_mean_position_error = 0.005;
  s.acceptance.max_mean_orientation_error = deg2rad(2.0);
  s.acceptance.ekf_not_worse_than_ls = true;
  return s;
}

Scenario static_grid_moving_actuator() {
  Scenario s;
  s.name = "static_grid_moving_actuator";
  s.description = "20 static probe poses (4 heights x 5 points) while the actuator sweeps an S-path 250 mm above the array.";
  GridTrajectory g;
  g.points = {Vec3(0.0, 0.0, 0.0), Vec3(0.08, 0.05, 0.0), Vec3(-0.08, 0.05, 0.0), Vec3(0.08, -0.05, 0.0),
              Vec3(-0.08, -0.05, 0.0)};
  s.duration = g.dwell * g.heights.size() * g.points.size();
  s.ekf.process_noise = Eigen::Vector4d(1e-6, 1e-6, 1e-6, 1e-5).asDiagonal();
  s.trajectory = g;
  s.acceptance.max_axis_position_error = 0.008;
  s.acceptance.max_grid_orientation_error = deg2rad(6.0);
  s.acceptance.grid_min_height = 0.10;
  s.acceptance.grid_max_height = 0.15;
  return s;
}

Scenario tracking_base() {
  Scenario s;
  s.seeds = {1, 2, 3, 4, 5};
  s.control_rate = 100.0;
  s.ekf.process_noise = Eigen::Vector4d(1e-5, 1e-5, 1e-5, 30.0).asDiagonal();
  s.controller.gains = ControlGains::diagonal(Vec3::Constant(120.0), Vec3::Constant(1.0),
                                              Vec3::Constant(0.02), Vec3::Constant(0.005));
  s.controller.solver.torque_weight = 100.0;
  s.controller.solver.restarts = false;
  s.controller.solver.motion_weight = 3.0;
  s.controller.solver.rotation_weight = 0.5;
  s.controller.max_control_force = 0.32;
  s.controller.dynamics.friction_force = 0.0;
  return s;
}

TrackingTrajectory channel_line(double y0) {
  TrackingTrajectory k;
  k.path = TrackingTrajectory::Path::line;
  k.initial_probe = Pose::from_euler(Vec3(-0.15, y0, 0.1), EulerAngles{M_PI, 0.0, 0.0});
  k.initial_actuator = Pose::from_euler(Vec3(-0.15, y0, 0.35), EulerAngles{M_PI, 0.0, 0.0});
  k.line_start = Vec3(-0.15, 0.0, 0.1);
  k.line_velocity = Vec3(0.01, 0.0, 0.0);
  k.line_moment = -Vec3::UnitZ();
  return k;
}

Scenario straightline_tracking() {
  Scenario s = tracking_base();
  s.name = "straightline_tracking";
  s.description = "Closed-loop tracking of a 10 mm/s straight line in a plane channel from a 100 mm lateral offset.";
  s.duration = 25.0;
  s.environment.kind = EnvironmentConfig::Kind::plane_channel;
  s.environment.z_level = 0.1;
  s.environment.gap = 0.002;
  s.steady_state_start = 9.0;
  s.trajectory = channel_line(0.1);
  s.acceptance.window_start = 9.0;
  s.acceptance.max_mean_position_error = 0.005;
  s.acceptance.max_mean_orientation_error = deg2rad(5.0);
  return s;
}

Scenario disturbance_recovery() {
  Scenario s = tracking_base();
  s.name = "disturbance_recovery";
  s.description = "Straight-line tracking with two lateral pushes at 120 mm and 240 mm of travel.";
  s.duration = 35.0;
  s.environment.kind = EnvironmentConfig::Kind::plane_channel;
  s.environment.z_level = 0.1;
  s.environment.gap = 0.002;
  s.steady_state_start = 9.0;
  s.controller.solver.motion_weight = 10.0;
  TrackingTrajectory k = channel_line(0.0);
  k.disturbances = {{12.0, Vec3(0.0, 0.5, 0.0), 0.15}, {24.0, Vec3(0.0, -0.5, 0.0), 0.15}};
  s.trajectory = k;
  s.acceptance.max_recovery_time = 5.0;
  return s;
}

Scenario teleop_channel() {
  Scenario s = tracking_base();
  s.name = "teleop_channel";
  s.description =
      "Plane channel with the probe starting on the line start; scripted runs follow the line, the teleoperation "
      "service holds the start pose until commanded.";
  s.seeds = {1};
  s.duration = 30.0;
  s.environment.kind = EnvironmentConfig::Kind::plane_channel;
  s.environment.z_level = 0.1;
  s.environment.gap = 0.002;
  s.trajectory = channel_line(0.0);
  return s;
}

std::vector<Vec3> esophagus_points() {
  std::vector<Vec3> pts;
  for (int i = 0; i <= 20; ++i) {
    const double x = -0.10 + 0.0095 * i;
    pts.emplace_back(x, 0.015 * std::sin(M_PI * x / 0.1), 0.1 + 0.008 * std::sin(M_PI * x / 0.15));
  }
  return pts;
}

Scenario esophagus_following() {
  Scenario s = tracking_base();
  s.name = "esophagus_following";
  s.description =
      "Advance along a ~200 mm esophageal centerline in a 20 mm tube, then +-15 deg in-plane and out-of-plane "
      "rotations at the end point.";
  s.duration = 40.5;
  s.environment.kind = EnvironmentConfig::Kind::tube;
  s.environment.radius = 0.010;
  s.environment.centerline = esophagus_points();
  const Centerline cl = Centerline::fit(s.environment.centerline);
  TrackingTrajectory k;
  k.path = TrackingTrajectory::Path::centerline;
  k.initial_probe = cl.frame(0.0);
  k.initial_actuator.position = k.initial_probe.position + Vec3(0.0, 0.0, 0.14);
  k.centerline_speed = 0.01;
  k.hold_commands = {{20.5, {CommandKind::anteflex, deg2rad(15.0), std::nullopt}},
                     {25.5, {CommandKind::anteflex, deg2rad(-15.0), std::nullopt}},
                     {30.5, {CommandKind::turn, deg2rad(15.0), std::nullopt}},
                     {35.5, {CommandKind::turn, deg2rad(-15.0), std::nullopt}}};
  s.trajectory = k;
  s.acceptance.window_end = 20.5;
  s.acceptance.max_mean_position_error = 0.008;
  s.acceptance.max_mean_orientation_error = deg2rad(10.0);
  s.acceptance.max_final_orientation_error = deg2rad(3.0);
  return s;
}

}  // namespace

std::vector<std::string> builtin_scenario_names() {
  return {"spiral_localization", "static_grid_moving_actuator", "straightline_tracking", "disturbance_recovery",
          "esophagus_following", "teleop_channel"};
}

Scenario builtin_scenario(const std::string& name) {
  Scenario s;
  if (name == "spiral_localization") {
    s = spiral_localization();
  } else if (name == "static_grid_moving_actuator") {
    s = static_grid_moving_actuator();
  } else if (name == "straightline_tracking") {
    s = straightline_tracking();
  } else if (name == "disturbance_recovery") {
    s = disturbance_recovery();
  } else if (name == "esophagus_following") {
    s = esophagus_following();
  } else if (name == "teleop_channel") {
    s = teleop_channel();
  } else {
    throw ConfigError("unknown builtin scenario '" + name + "'");
  }
  s.ekf.dt = 1.0 / s.estimator_rate;
  return s;
}

}  // namespace magtee
