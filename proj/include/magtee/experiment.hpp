#pragma once

// Scenario runner: drives sim_world, sensing, localization and control for
// every seed of a scenario, records per-step errors and evaluates the
// scenario's acceptance bounds.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "magtee/metrics.hpp"
#include "magtee/scenario.hpp"

namespace magtee {

struct RunOptions {
  /// Replaces the scenario's seed list with this single seed.
  std::optional<std::uint64_t> seed;
  double duration_scale = 1.0;
};

struct Check {
  std::string name;
  double value = 0.0;  // NaN when the quantity could not be computed
  double limit = 0.0;
  bool passed = false;
};

struct Fault {
  std::uint64_t seed = 0;
  double time = 0.0;
  std::string message;
};

struct RunResult {
  Scenario scenario;
  RecordTable records;                // deterministic per seed
  std::vector<double> compute_times;  // wall-clock s, one per record row
  Summary summary;
  std::map<std::uint64_t, Summary> per_seed;
  nlohmann::json details = nlohmann::json::object();
  std::vector<Check> checks;
  std::optional<Fault> fault;

  bool passed() const;
};

/// Record columns, in CSV order. Localization runs fill position_error and
/// orientation_error with estimator errors; closed-loop runs with tracking
/// errors. Entries that do not apply are NaN.
const std::vector<std::string>& record_columns();
/// Channels summarized in summary.json.
const std::vector<std::string>& summary_channels();

/// Path frame of a tracking trajectory at time t: x along the direction of
/// travel, z the desired moment. `centerline` is required for centerline paths.
Pose path_pose(const TrackingTrajectory& k, const Centerline* centerline, double t);

/// Module faults stop the run; what was recorded so far is kept and the
/// fault is reported in the result.
RunResult run_scenario(const Scenario& scenario, const RunOptions& options = {});

void write_records_csv(std::ostream& out, const RecordTable& records);
/// Throws ConfigError on a malformed table.
RecordTable read_records_csv(std::istream& in);

nlohmann::json summary_to_json(const Summary& s);
nlohmann::json result_to_json(const RunResult& r);

/// records.csv, timing.csv, summary.json and scenario.json in `dir` (created if needed).
void write_run_outputs(const RunResult& r, const std::string& dir);

/// Time after `event_end` at which the trailing `window` means of the two
/// error columns first drop to the bounds, using rows of one seed ordered
/// by time. NaN if that never happens before `horizon`.
double recovery_time(const std::vector<double>& t, const std::vector<double>& position_error,
                     const std::vector<double>& orientation_error, double event_end, double horizon,
                     double window, double position_bound, double orientation_bound);

}  // namespace magtee
