// Command-line scenario runner.
//
//   magtee list
//   magtee show <builtin>
//   magtee validate <scenario.json>
//   magtee run <scenario.json | builtin> [--seed N] [--out-dir DIR] [--duration-scale S] [--check]
//   magtee replay <frames.jsonl> [--background-frames N] [--out FILE]

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "magtee/errors.hpp"
#include "magtee/experiment.hpp"

using namespace magtee;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitAcceptance = 2;
constexpr int kExitFault = 3;

Scenario resolve(const std::string& what) {
  if (std::filesystem::exists(what)) return load_scenario_file(what);
  for (const auto& name : builtin_scenario_names()) {
    if (name == what) return builtin_scenario(name);
  }
  throw ConfigError("'" + what + "' is neither a scenario file nor a builtin name");
}

int run(const std::string& what, std::optional<std::uint64_t> seed, const std::string& out_dir, double scale,
        bool check) {
  const Scenario sc = resolve(what);
  RunOptions opts;
  opts.seed = seed;
  opts.duration_scale = scale;
  const RunResult r = run_scenario(sc, opts);
  const std::string dir = out_dir.empty() ? "runs/" + sc.name : out_dir;
  write_run_outputs(r, dir);

  std::printf("%s: %zu rows, seeds", sc.name.c_str(), r.records.rows.size());
  for (auto s : r.scenario.seeds) std::printf(" %llu", static_cast<unsigned long long>(s));
  std::printf("\n");
  const auto& overall = r.summary.overall;
  std::printf("  mean position error %.3f mm, mean orientation error %.3f deg\n",
              overall.at("position_error").mean * 1e3, rad2deg(overall.at("orientation_error").mean));
  if (r.summary.steady_state) {
    const auto& ss = *r.summary.steady_state;
    std::printf("  steady state (t >= %.1f s): %.3f mm, %.3f deg\n", r.summary.steady_state_start,
                ss.at("position_error").mean * 1e3, rad2deg(ss.at("orientation_error").mean));
  }
  for (const Check& c : r.checks) {
    std::printf("  [%s] %s: %.6g (limit %.6g)\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.value, c.limit);
  }
  std::printf("  outputs in %s\n", dir.c_str());
  if (r.fault) {
    std::fprintf(stderr, "fault (seed %llu, t = %.3f s): %s\n", static_cast<unsigned long long>(r.fault->seed),
                 r.fault->time, r.fault->message.c_str());
    return kExitFault;
  }
  if (check && !r.passed()) return kExitAcceptance;
  return kExitOk;
}

int replay(const std::string& path, int background_frames, const std::string& out_path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  const std::vector<RecordedFrame> frames = read_frames(in);
  if (static_cast<int>(frames.size()) <= background_frames) throw ConfigError("not enough frames to replay");
  const SensorArrayLayout layout = SensorArrayLayout::default_layout();
  const MagnetSpec capsule = default_capsule_magnet();
  const MagnetSpec actuator = default_actuator_magnet();
  if (frames.front().frame.raw_fields.size() != layout.size()) {
    throw ConfigError("recording does not match the default 36-sensor layout");
  }

  EnvironmentField env = EnvironmentField::zeros(layout.size());
  if (background_frames > 0) {
    std::vector<SensorFrame> calib;
    for (int i = 0; i < background_frames; ++i) calib.push_back(frames[i].frame);
    env = estimate_environment(calib);
  }
  auto placed = [&](const RecordedFrame& f) -> std::optional<PlacedMagnet> {
    if (!f.actuator_pose) return std::nullopt;
    return PlacedMagnet{actuator, *f.actuator_pose};
  };

  std::ofstream file;
  if (!out_path.empty()) file.open(out_path);
  std::ostream& out = out_path.empty() ? std::cout : file;
  write_estimate_header(out);

  const RecordedFrame& first = frames[background_frames];
  const LsResult ls = ls_initialize(extract_capsule_field(first.frame, layout, placed(first), env),
                                    first.frame.imu_roll, first.frame.imu_pitch, layout,
                                    moment_from_spec(capsule));
  EstimatorState s = state_from_ls(ls, first.frame.imu_roll, first.frame.imu_pitch, first.frame.timestamp);
  write_estimate_row(out, s);
  EkfConfig cfg;
  for (std::size_t i = background_frames + 1; i < frames.size(); ++i) {
    cfg.dt = frames[i].frame.timestamp - frames[i - 1].frame.timestamp;
    s = track_step(s, frames[i].frame, placed(frames[i]), env, layout, capsule, cfg);
    write_estimate_row(out, s);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Magnetic capsule localization and actuation experiments"};
  app.require_subcommand(1);

  auto* list = app.add_subcommand("list", "List builtin scenarios");

  std::string show_name;
  auto* show = app.add_subcommand("show", "Print a builtin scenario as JSON");
  show->add_option("name", show_name, "Builtin scenario name")->required();

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Parse and validate a scenario file");
  validate->add_option("file", validate_path, "Scenario JSON")->required();

  std::string run_what, out_dir;
  std::optional<std::uint64_t> seed;
  double scale = 1.0;
  bool check = false;
  auto* runc = app.add_subcommand("run", "Run a scenario file or builtin");
  runc->add_option("scenario", run_what, "Scenario JSON file or builtin name")->required();
  runc->add_option("--seed", seed, "Run this seed only");
  runc->add_option("--out-dir", out_dir, "Output directory (default runs/<name>)");
  runc->add_option("--duration-scale", scale, "Multiply the scenario duration")->check(CLI::NonNegativeNumber);
  runc->add_flag("--check", check, "Exit with code 2 when an acceptance bound is violated");

  std::string replay_path, replay_out;
  int background_frames = 0;
  auto* rep = app.add_subcommand("replay", "Run the estimator over a recorded frame file");
  rep->add_option("frames", replay_path, "Line-delimited JSON frames")->required();
  rep->add_option("--background-frames", background_frames, "Leading magnet-free frames used for calibration")
      ->check(CLI::NonNegativeNumber);
  rep->add_option("--out", replay_out, "Estimate CSV (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*list) {
      for (const auto& name : builtin_scenario_names()) {
        std::printf("%-30s %s\n", name.c_str(), builtin_scenario(name).description.c_str());
      }
      return kExitOk;
    }
    if (*show) {
      std::cout << scenario_to_json(builtin_scenario(show_name)).dump(2) << '\n';
      return kExitOk;
    }
    if (*validate) {
      const Scenario sc = load_scenario_file(validate_path);
      std::printf("%s: ok (%s, %zu seeds, %.3g s)\n", sc.name.c_str(), to_string(sc.kind()).c_str(),
                  sc.seeds.size(), sc.duration);
      return kExitOk;
    }
    if (*runc) return run(run_what, seed, out_dir, scale, check);
    if (*rep) return replay(replay_path, background_frames, replay_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFault;
  }
  return kExitOk;
}
