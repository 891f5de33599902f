#pragma once

// Error definitions and summary statistics for experiment runs.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "magtee/geometry.hpp"

namespace magtee {

/// Angle of R_est^T R_true in [0, pi]. Throws DomainError for non-rotations.
double orientation_error(const Mat3& r_est, const Mat3& r_true);

/// Angle between two nonzero vectors in [0, pi].
double angle_between(const Vec3& a, const Vec3& b);

struct ChannelStats {
  std::size_t count = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1), 0 for a single value
  double rms = 0.0;
  double max = 0.0;
};

/// Stats over the finite entries of `values` (NaN marks "not applicable").
ChannelStats channel_stats(const std::vector<double>& values);

/// Column-oriented table of per-step records.
struct RecordTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const;  // throws ConfigError if absent
  std::vector<double> values(const std::string& name) const;
  std::vector<double> values(const std::string& name, double t_min, const std::string& time_column = "t") const;
};

struct Summary {
  std::size_t rows = 0;
  std::map<std::string, ChannelStats> overall;
  double steady_state_start = 0.0;
  /// Absent when no row falls inside the steady-state window.
  std::optional<std::map<std::string, ChannelStats>> steady_state;
};

/// Mean / std per channel over all rows and over rows with t >= steady_state_start.
Summary summarize(const RecordTable& records, const std::vector<std::string>& channels,
                  double steady_state_start);

}  // namespace magtee
