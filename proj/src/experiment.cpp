#include "magtee/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "magtee/errors.hpp"

namespace magtee {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kEps = 1e-9;

enum Col {
  kSeed,
  kT,
  kPosErr,
  kOriErr,
  kResidual,
  kEstPosErr,
  kEstOriErr,
  kLsPosErr,
  kLsOriErr,
  kTrueX, kTrueY, kTrueZ,
  kEstX, kEstY, kEstZ,
  kTargetX, kTargetY, kTargetZ,
  kActX, kActY, kActZ,
  kPoseIndex,
  kColumnCount
};

using Row = std::vector<double>;

Row empty_row(std::uint64_t seed, double t) {
  Row r(kColumnCount, kNaN);
  r[kSeed] = static_cast<double>(seed);
  r[kT] = t;
  return r;
}

void put(Row& r, int first, const Vec3& v) {
  r[first] = v.x();
  r[first + 1] = v.y();
  r[first + 2] = v.z();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

/// Background calibration shared by the open-loop runners: the true static
/// field and its estimate from magnet-free frames.
struct Background {
  EnvironmentField truth;
  EnvironmentField estimate;
};

Background calibrate(const Scenario& sc, const SensorArrayLayout& layout, std::uint64_t seed,
                     std::mt19937_64& rng) {
  Background b;
  b.truth = sc.background_field ? EnvironmentField::earth_like(layout.size(), seed ^ 0x5bd1e995ULL)
                                : EnvironmentField::zeros(layout.size());
  std::vector<SensorFrame> frames;
  for (std::size_t i = 0; i < kMinEnvironmentFrames * 2; ++i) {
    SensorFrame f;
    f.raw_fields = sample_array(layout, std::nullopt, std::nullopt, b.truth, rng);
    frames.push_back(std::move(f));
  }
  b.estimate = estimate_environment(frames);
  return b;
}

struct Recorder {
  RecordTable& records;
  std::vector<double>& times;
  void add(Row row, double compute) {
    records.rows.push_back(std::move(row));
    times.push_back(compute);
  }
};

EkfConfig ekf_for(const Scenario& sc) {
  EkfConfig e = sc.ekf;
  e.dt = 1.0 / sc.estimator_rate;
  return e;
}

// ------------------------------------------------------------ spiral

void run_spiral(const Scenario& sc, std::uint64_t seed, double duration, Recorder& rec, json& details) {
  const auto& sp = std::get<SpiralTrajectory>(sc.trajectory);
  const SensorArrayLayout layout = sc.array.layout();
  const EkfConfig ekf = ekf_for(sc);
  const double m = moment_from_spec(sc.capsule);
  std::mt19937_64 rng(seed);
  const Background bg = calibrate(sc, layout, seed, rng);

  const double turn_length = std::hypot(2.0 * M_PI * sp.radius, sp.rise_per_turn);
  const double theta_dot = 2.0 * M_PI * sp.speed / turn_length;
  auto pose_at = [&](double t) {
    const double th = theta_dot * t;
    const Vec3 p = sp.center + Vec3(sp.radius * std::cos(th), sp.radius * std::sin(th),
                                    sp.rise_per_turn * th / (2.0 * M_PI));
    return Pose::from_euler(p, EulerAngles{sp.tilt, 0.0, wrap_angle(th + M_PI / 2)});
  };
  auto frame_at = [&](double t, const Pose& pose) {
    const double th = theta_dot * t;
    const Vec3 accel = -sp.radius * theta_dot * theta_dot * Vec3(std::cos(th), std::sin(th), 0.0);
    const Vec3 gyro = pose.orientation.transpose() * Vec3(0.0, 0.0, theta_dot);
    SensorFrame f;
    f.timestamp = t;
    f.raw_fields = sample_array(layout, PlacedMagnet{sc.capsule, pose}, std::nullopt, bg.truth, rng);
    const ImuReading imu = sample_imu(pose, accel, gyro, sc.imu, rng);
    f.imu_accel = imu.accel;
    f.imu_gyro = imu.gyro;
    f.imu_roll = imu.roll;
    f.imu_pitch = imu.pitch;
    return f;
  };

  const SensorFrame first = frame_at(0.0, pose_at(0.0));
  LsResult ls = ls_initialize(extract_capsule_field(first, layout, std::nullopt, bg.estimate), first.imu_roll,
                              first.imu_pitch, layout, m, sc.ls);
  EstimatorState s = state_from_ls(ls, first.imu_roll, first.imu_pitch, 0.0);

  double ekf_sq = 0.0, ls_sq = 0.0;
  std::size_t n = 0;
  const long steps = std::lround(duration * sc.estimator_rate);
  for (long i = 1; i <= steps; ++i) {
    const double t = i / sc.estimator_rate;
    const Pose truth = pose_at(t);
    const SensorFrame f = frame_at(t, truth);
    const auto start = std::chrono::steady_clock::now();
    s = track_step(s, f, std::nullopt, bg.estimate, layout, sc.capsule, ekf);
    const double compute = seconds_since(start);
    ls = ls_refine(extract_capsule_field(f, layout, std::nullopt, bg.estimate), f.imu_roll, f.imu_pitch, layout, m,
                   ls.position, ls.yaw, sc.ls);
    const Pose ls_pose = Pose::from_euler(ls.position, EulerAngles{f.imu_roll, f.imu_pitch, ls.yaw});

    Row r = empty_row(seed, t);
    r[kPosErr] = (s.position - truth.position).norm();
    r[kOriErr] = orientation_error(s.full_pose.orientation, truth.orientation);
    r[kEstPosErr] = r[kPosErr];
    r[kEstOriErr] = r[kOriErr];
    r[kLsPosErr] = (ls.position - truth.position).norm();
    r[kLsOriErr] = orientation_error(ls_pose.orientation, truth.orientation);
    put(r, kTrueX, truth.position);
    put(r, kEstX, s.position);
    ekf_sq += r[kPosErr] * r[kPosErr];
    ls_sq += r[kLsPosErr] * r[kLsPosErr];
    ++n;
    rec.add(std::move(r), compute);
  }
  if (n > 0) {
    details["ekf_ls"].push_back({{"seed", seed},
                                 {"ekf_rms_position_error", std::sqrt(ekf_sq / n)},
                                 {"ls_rms_position_error", std::sqrt(ls_sq / n)}});
  }
}

// ------------------------------------------------------------ grid

Pose grid_actuator_pose(const GridTrajectory& g, double t) {
  // Triangle-wave progress along a two-lobe S, back and forth.
  const double phase = std::fmod(t / g.actuator_period, 2.0);
  const double u = phase < 1.0 ? phase : 2.0 - phase;
  Pose p;
  p.position = Vec3(-g.actuator_half_span + 2.0 * g.actuator_half_span * u,
                    g.actuator_amplitude * std::sin(2.0 * M_PI * u), g.actuator_height);
  p.orientation = rot_x(M_PI);
  return p;
}

void run_grid(const Scenario& sc, std::uint64_t seed, double duration, Recorder& rec) {
  const auto& g = std::get<GridTrajectory>(sc.trajectory);
  const SensorArrayLayout layout = sc.array.layout();
  const EkfConfig ekf = ekf_for(sc);
  const double m = moment_from_spec(sc.capsule);
  std::mt19937_64 rng(seed);
  const Background bg = calibrate(sc, layout, seed, rng);

  const long dwell_ticks = std::max(1L, std::lround(g.dwell * sc.estimator_rate));
  const long steps = std::lround(duration * sc.estimator_rate);
  long tick = 0;
  int pose_index = 0;
  for (double h : g.heights) {
    for (const Vec3& xy : g.points) {
      const Pose truth = Pose::from_euler(Vec3(xy.x(), xy.y(), h), EulerAngles{g.tilt, 0.0, g.yaw});
      EstimatorState s;
      for (long j = 0; j < dwell_ticks && tick < steps; ++j) {
        ++tick;
        const double t = tick / sc.estimator_rate;
        const PlacedMagnet actuator{*sc.actuator, grid_actuator_pose(g, t)};
        SensorFrame f;
        f.timestamp = t;
        f.raw_fields = sample_array(layout, PlacedMagnet{sc.capsule, truth}, actuator, bg.truth, rng);
        const ImuReading imu = sample_imu(truth, Vec3::Zero(), Vec3::Zero(), sc.imu, rng);
        f.imu_accel = imu.accel;
        f.imu_gyro = imu.gyro;
        f.imu_roll = imu.roll;
        f.imu_pitch = imu.pitch;

        const auto start = std::chrono::steady_clock::now();
        if (j == 0) {
          const LsResult ls = ls_initialize(extract_capsule_field(f, layout, actuator, bg.estimate), f.imu_roll,
                                            f.imu_pitch, layout, m, sc.ls);
          s = state_from_ls(ls, f.imu_roll, f.imu_pitch, t);
        } else {
          s = track_step(s, f, actuator, bg.estimate, layout, sc.capsule, ekf);
        }
        const double compute = seconds_since(start);

        Row r = empty_row(seed, t);
        r[kPosErr] = (s.position - truth.position).norm();
        r[kOriErr] = orientation_error(s.full_pose.orientation, truth.orientation);
        r[kEstPosErr] = r[kPosErr];
        r[kEstOriErr] = r[kOriErr];
        put(r, kTrueX, truth.position);
        put(r, kEstX, s.position);
        put(r, kActX, actuator.pose.position);
        r[kPoseIndex] = pose_index;
        rec.add(std::move(r), compute);
      }
      ++pose_index;
    }
  }
}

// ------------------------------------------------------------ closed loop

void run_tracking(const Scenario& sc, std::uint64_t seed, double duration, Recorder& rec) {
  const auto& k = std::get<TrackingTrajectory>(sc.trajectory);
  const ClosedLoopConfig cfg = sc.loop_config(seed);
  const Centerline* cl = nullptr;
  if (const auto* tube = std::get_if<Tube>(&cfg.environment.kind)) cl = tube->centerline.get();

  WorldState w;
  w.probe_pose = k.initial_probe;
  w.actuator_pose = k.initial_actuator;
  const Pose p0 = path_pose(k, cl, 0.0);
  ClosedLoop loop(cfg, w, target_from_pose(p0));

  std::optional<ControlTarget> held;
  std::size_t next_hold = 0;
  const long steps = std::lround(duration * sc.estimator_rate);
  for (long i = 1; i <= steps; ++i) {
    const double t = i / sc.estimator_rate;
    for (const DisturbanceEvent& d : k.disturbances) {
      if (i == std::lround(d.time * sc.estimator_rate)) loop.disturb(d.force, d.duration);
    }
    while (next_hold < k.hold_commands.size() &&
           i == std::lround(k.hold_commands[next_hold].time * sc.estimator_rate)) {
      const HoldCommand& h = k.hold_commands[next_hold++];
      held = clinical_command_to_target(path_pose(k, cl, h.time), h.command);
    }
    loop.set_target(held ? *held : target_from_pose(path_pose(k, cl, t)));
    const LoopSnapshot& s = loop.tick();

    Row r = empty_row(seed, s.time);
    r[kPosErr] = s.position_error;
    r[kOriErr] = s.orientation_error;
    r[kResidual] = s.setpoint.residual;
    r[kEstPosErr] = s.estimate_position_error;
    r[kEstOriErr] = s.estimate_orientation_error;
    put(r, kTrueX, s.world.probe_pose.position);
    put(r, kEstX, s.estimate.position);
    put(r, kTargetX, s.target.desired_position);
    put(r, kActX, s.world.actuator_pose.position);
    rec.add(std::move(r), s.compute_time);
  }
}

// ------------------------------------------------------------ checks

struct SeedRows {
  std::vector<double> t, pos, ori;
};

std::map<std::uint64_t, SeedRows> split_by_seed(const RecordTable& table) {
  std::map<std::uint64_t, SeedRows> out;
  for (const Row& r : table.rows) {
    SeedRows& s = out[static_cast<std::uint64_t>(r[kSeed])];
    s.t.push_back(r[kT]);
    s.pos.push_back(r[kPosErr]);
    s.ori.push_back(r[kOriErr]);
  }
  return out;
}

std::string fmt_seed(std::uint64_t seed) { return "seed " + std::to_string(seed); }

void add_check(RunResult& r, std::string name, double value, double limit) {
  r.checks.push_back({std::move(name), value, limit, std::isfinite(value) && value <= limit});
}

void evaluate(RunResult& res, double duration) {
  const Scenario& sc = res.scenario;
  const AcceptanceSpec& a = sc.acceptance;
  const auto seeds = split_by_seed(res.records);

  for (const auto& [seed, rows] : seeds) {
    std::vector<double> pos, ori;
    for (std::size_t i = 0; i < rows.t.size(); ++i) {
      if (rows.t[i] >= a.window_start - kEps && rows.t[i] < a.window_end - kEps) {
        pos.push_back(rows.pos[i]);
        ori.push_back(rows.ori[i]);
      }
    }
    if (pos.empty()) continue;
    if (a.max_mean_position_error) {
      add_check(res, fmt_seed(seed) + " mean position error [m]", channel_stats(pos).mean, *a.max_mean_position_error);
    }
    if (a.max_mean_orientation_error) {
      add_check(res, fmt_seed(seed) + " mean orientation error [rad]", channel_stats(ori).mean,
                *a.max_mean_orientation_error);
    }
  }

  if (a.ekf_not_worse_than_ls && res.details.contains("ekf_ls")) {
    for (const auto& e : res.details["ekf_ls"]) {
      add_check(res, fmt_seed(e["seed"].get<std::uint64_t>()) + " EKF rms minus LS rms position error [m]",
                e["ekf_rms_position_error"].get<double>() - e["ls_rms_position_error"].get<double>(), 0.0);
    }
  }

  if (const auto* g = std::get_if<GridTrajectory>(&sc.trajectory); g && !res.records.rows.empty()) {
    json table = json::array();
    for (double h : g->heights) {
      std::vector<double> ex, ey, ez, eo;
      for (const Row& r : res.records.rows) {
        if (std::abs(r[kTrueZ] - h) > 1e-9) continue;
        ex.push_back(std::abs(r[kEstX] - r[kTrueX]));
        ey.push_back(std::abs(r[kEstY] - r[kTrueY]));
        ez.push_back(std::abs(r[kEstZ] - r[kTrueZ]));
        eo.push_back(r[kOriErr]);
      }
      if (ex.empty()) continue;
      const double mx = channel_stats(ex).mean, my = channel_stats(ey).mean, mz = channel_stats(ez).mean;
      const ChannelStats so = channel_stats(eo);
      table.push_back({{"height", h},
                       {"mean_abs_error_x", mx},
                       {"mean_abs_error_y", my},
                       {"mean_abs_error_z", mz},
                       {"mean_orientation_error", so.mean},
                       {"std_orientation_error", so.std},
                       {"frames", ex.size()}});
      if (h < a.grid_min_height - kEps || h > a.grid_max_height + kEps) continue;
      const std::string at = "height " + std::to_string(static_cast<int>(std::lround(h * 1000))) + " mm";
      if (a.max_axis_position_error) {
        add_check(res, at + " mean |x error| [m]", mx, *a.max_axis_position_error);
        add_check(res, at + " mean |y error| [m]", my, *a.max_axis_position_error);
        add_check(res, at + " mean |z error| [m]", mz, *a.max_axis_position_error);
      }
      if (a.max_grid_orientation_error) {
        add_check(res, at + " mean orientation error [rad]", so.mean, *a.max_grid_orientation_error);
      }
    }
    res.details["per_height"] = table;
  }

  const auto* k = std::get_if<TrackingTrajectory>(&sc.trajectory);
  if (!k) return;

  if (a.max_recovery_time && !k->disturbances.empty()) {
    json rec = json::array();
    for (const auto& [seed, rows] : seeds) {
      for (std::size_t d = 0; d < k->disturbances.size(); ++d) {
        const DisturbanceEvent& ev = k->disturbances[d];
        const double end = ev.time + ev.duration;
        if (end > duration + kEps) continue;
        const double horizon = d + 1 < k->disturbances.size() ? k->disturbances[d + 1].time : duration;
        const double rt = recovery_time(rows.t, rows.pos, rows.ori, end, horizon, a.recovery_window,
                                        a.recovery_position_error, a.recovery_orientation_error);
        rec.push_back({{"seed", seed}, {"disturbance", d}, {"recovery_time", std::isfinite(rt) ? json(rt) : json(nullptr)}});
        add_check(res, fmt_seed(seed) + " recovery time after push " + std::to_string(d + 1) + " [s]", rt,
                  *a.max_recovery_time);
      }
    }
    res.details["recovery"] = rec;
  }

  if (a.max_final_orientation_error && !k->hold_commands.empty()) {
    json holds = json::array();
    for (const auto& [seed, rows] : seeds) {
      for (std::size_t h = 0; h < k->hold_commands.size(); ++h) {
        const double end = h + 1 < k->hold_commands.size() ? k->hold_commands[h + 1].time : duration;
        if (k->hold_commands[h].time >= duration - kEps) continue;
        std::vector<double> ori;
        for (std::size_t i = 0; i < rows.t.size(); ++i) {
          if (rows.t[i] > end - a.final_window + kEps && rows.t[i] <= end + kEps &&
              rows.t[i] > k->hold_commands[h].time + kEps) {
            ori.push_back(rows.ori[i]);
          }
        }
        const double v = ori.empty() ? kNaN : channel_stats(ori).mean;
        const ClinicalCommand& c = k->hold_commands[h].command;
        holds.push_back({{"seed", seed},
                         {"command", to_string(c.kind)},
                         {"amount", c.amount},
                         {"final_orientation_error", std::isfinite(v) ? json(v) : json(nullptr)}});
        add_check(res, fmt_seed(seed) + " final orientation error after " + to_string(c.kind) + " " +
                           std::to_string(static_cast<int>(std::lround(rad2deg(c.amount)))) + " deg [rad]",
                  v, *a.max_final_orientation_error);
      }
    }
    res.details["holds"] = holds;
  }
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json stats_json(const ChannelStats& s) {
  return {{"count", s.count}, {"mean", s.mean}, {"std", s.std}, {"rms", s.rms}, {"max", s.max}};
}

}  // namespace

bool RunResult::passed() const {
  if (fault) return false;
  for (const Check& c : checks) {
    if (!c.passed) return false;
  }
  return true;
}

const std::vector<std::string>& record_columns() {
  static const std::vector<std::string> cols = {
      "seed", "t", "position_error", "orientation_error", "solver_residual", "estimate_position_error",
      "estimate_orientation_error", "ls_position_error", "ls_orientation_error", "true_x", "true_y", "true_z",
      "est_x", "est_y", "est_z", "target_x", "target_y", "target_z", "actuator_x", "actuator_y", "actuator_z",
      "pose_index"};
  return cols;
}

const std::vector<std::string>& summary_channels() {
  static const std::vector<std::string> ch = {"position_error",          "orientation_error",
                                              "solver_residual",         "estimate_position_error",
                                              "estimate_orientation_error", "ls_position_error",
                                              "ls_orientation_error"};
  return ch;
}

double recovery_time(const std::vector<double>& t, const std::vector<double>& position_error,
                     const std::vector<double>& orientation_error, double event_end, double horizon,
                     double window, double position_bound, double orientation_bound) {
  std::size_t lo = 0;
  double sum_p = 0.0, sum_o = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] <= event_end + kEps) {
      lo = i + 1;
      continue;
    }
    sum_p += position_error[i];
    sum_o += orientation_error[i];
    while (lo < i && t[lo] <= t[i] - window + kEps) {
      sum_p -= position_error[lo];
      sum_o -= orientation_error[lo];
      ++lo;
    }
    if (t[i] > horizon + kEps) break;
    if (t[i] < event_end + window - kEps) continue;
    const double n = static_cast<double>(i - lo + 1);
    if (sum_p / n <= position_bound && sum_o / n <= orientation_bound) return t[i] - event_end;
  }
  return kNaN;
}

Pose path_pose(const TrackingTrajectory& k, const Centerline* cl, double t) {
  if (k.path == TrackingTrajectory::Path::centerline) {
    return cl->frame(std::min(k.centerline_speed * t, cl->length()));
  }
  Pose p;
  p.position = k.line_start + k.line_velocity * t;
  const Vec3 z = k.line_moment.normalized();
  Vec3 x = k.line_velocity - k.line_velocity.dot(z) * z;
  x = x.norm() > 1e-12 ? x.normalized() : any_perpendicular(z);
  p.orientation.col(0) = x;
  p.orientation.col(1) = z.cross(x);
  p.orientation.col(2) = z;
  return p;
}

RunResult run_scenario(const Scenario& scenario, const RunOptions& options) {
  if (!(options.duration_scale >= 0.0)) throw ConfigError("duration scale must be >= 0");
  RunResult res;
  res.scenario = scenario;
  if (options.seed) res.scenario.seeds = {*options.seed};
  res.scenario.duration = scenario.duration * options.duration_scale;
  res.scenario.validate();
  const Scenario& sc = res.scenario;
  res.records.columns = record_columns();
  Recorder rec{res.records, res.compute_times};

  for (std::uint64_t seed : sc.seeds) {
    try {
      switch (sc.kind()) {
        case ScenarioKind::spiral_localization:
          run_spiral(sc, seed, sc.duration, rec, res.details);
          break;
        case ScenarioKind::static_grid:
          run_grid(sc, seed, sc.duration, rec);
          break;
        case ScenarioKind::closed_loop:
          run_tracking(sc, seed, sc.duration, rec);
          break;
      }
    } catch (const Error& e) {
      const double t = res.records.rows.empty() ? 0.0 : res.records.rows.back()[kT];
      res.fault = Fault{seed, t, e.what()};
      break;
    }
  }

  res.summary = summarize(res.records, summary_channels(), sc.steady_state_start);
  for (std::uint64_t seed : sc.seeds) {
    RecordTable one;
    one.columns = res.records.columns;
    for (const Row& r : res.records.rows) {
      if (static_cast<std::uint64_t>(r[kSeed]) == seed) one.rows.push_back(r);
    }
    res.per_seed[seed] = summarize(one, summary_channels(), sc.steady_state_start);
  }
  evaluate(res, sc.duration);
  return res;
}

void write_records_csv(std::ostream& out, const RecordTable& records) {
  for (std::size_t c = 0; c < records.columns.size(); ++c) out << (c ? "," : "") << records.columns[c];
  out << '\n';
  for (const auto& row : records.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << format_double(row[c]);
    out << '\n';
  }
}

RecordTable read_records_csv(std::istream& in) {
  RecordTable t;
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("records CSV is empty");
  std::stringstream header(line);
  for (std::string col; std::getline(header, col, ',');) t.columns.push_back(col);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<double> row;
    for (std::string cell; std::getline(ss, cell, ',');) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) throw ConfigError("records CSV: bad number '" + cell + "'");
      row.push_back(v);
    }
    if (row.size() != t.columns.size()) throw ConfigError("records CSV: row width differs from the header");
    t.rows.push_back(std::move(row));
  }
  return t;
}

json summary_to_json(const Summary& s) {
  json j = {{"rows", s.rows}, {"steady_state_start", s.steady_state_start}};
  json overall = json::object();
  for (const auto& [ch, st] : s.overall) overall[ch] = stats_json(st);
  j["overall"] = overall;
  if (s.steady_state) {
    json steady = json::object();
    for (const auto& [ch, st] : *s.steady_state) steady[ch] = stats_json(st);
    j["steady_state"] = steady;
  } else {
    j["steady_state"] = nullptr;
  }
  return j;
}

json result_to_json(const RunResult& r) {
  json seeds = json::array();
  for (auto s : r.scenario.seeds) seeds.push_back(s);
  json per_seed = json::object();
  for (const auto& [seed, s] : r.per_seed) per_seed[std::to_string(seed)] = summary_to_json(s);
  json checks = json::array();
  for (const Check& c : r.checks) {
    checks.push_back({{"name", c.name},
                      {"value", std::isfinite(c.value) ? json(c.value) : json(nullptr)},
                      {"limit", c.limit},
                      {"passed", c.passed}});
  }
  json j = {{"scenario", r.scenario.name},
            {"seeds", seeds},
            {"duration", r.scenario.duration},
            {"summary", summary_to_json(r.summary)},
            {"per_seed", per_seed},
            {"details", r.details},
            {"checks", checks},
            {"passed", r.passed()}};
  if (r.fault) {
    j["fault"] = {{"seed", r.fault->seed}, {"time", r.fault->time}, {"message", r.fault->message}};
  } else {
    j["fault"] = nullptr;
  }
  return j;
}

void write_run_outputs(const RunResult& r, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path d(dir);
  {
    std::ofstream out(d / "records.csv");
    write_records_csv(out, r.records);
  }
  {
    std::ofstream out(d / "timing.csv");
    out << "seed,t,compute_time\n";
    for (std::size_t i = 0; i < r.records.rows.size(); ++i) {
      out << format_double(r.records.rows[i][kSeed]) << ',' << format_double(r.records.rows[i][kT]) << ','
          << format_double(r.compute_times[i]) << '\n';
    }
  }
  {
    std::ofstream out(d / "summary.json");
    out << result_to_json(r).dump(2) << '\n';
  }
  {
    std::ofstream out(d / "scenario.json");
    out << scenario_to_json(r.scenario).dump(2) << '\n';
  }
  if (!std::filesystem::exists(d / "records.csv")) throw ConfigError("cannot write outputs to " + dir);
}

}  // namespace magtee
