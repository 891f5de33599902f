#include "magtee/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "magtee/errors.hpp"

namespace magtee {

double orientation_error(const Mat3& r_est, const Mat3& r_true) {
  if (!is_rotation(r_est, 1e-6) || !is_rotation(r_true, 1e-6)) {
    throw DomainError("orientation_error needs two rotation matrices");
  }
  const double c = 0.5 * ((r_est.transpose() * r_true).trace() - 1.0);
  return std::acos(std::clamp(c, -1.0, 1.0));
}

double angle_between(const Vec3& a, const Vec3& b) {
  if (!(a.norm() > 0.0) || !(b.norm() > 0.0)) throw DomainError("angle_between needs nonzero vectors");
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

ChannelStats channel_stats(const std::vector<double>& values) {
  ChannelStats s;
  double sum = 0.0, sum_sq = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    ++s.count;
    sum += v;
    sum_sq += v * v;
    s.max = s.count == 1 ? v : std::max(s.max, v);
  }
  if (s.count == 0) return s;
  s.mean = sum / s.count;
  s.rms = std::sqrt(sum_sq / s.count);
  if (s.count > 1) {
    double ss = 0.0;
    for (double v : values) {
      if (std::isfinite(v)) ss += (v - s.mean) * (v - s.mean);
    }
    s.std = std::sqrt(ss / (s.count - 1));
  }
  return s;
}

std::size_t RecordTable::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw ConfigError("no record column '" + name + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

std::vector<double> RecordTable::values(const std::string& name) const {
  const std::size_t c = column(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[c]);
  return out;
}

std::vector<double> RecordTable::values(const std::string& name, double t_min,
                                        const std::string& time_column) const {
  const std::size_t c = column(name), tc = column(time_column);
  std::vector<double> out;
  for (const auto& r : rows) {
    if (r[tc] >= t_min) out.push_back(r[c]);
  }
  return out;
}

Summary summarize(const RecordTable& records, const std::vector<std::string>& channels,
                  double steady_state_start) {
  Summary s;
  s.rows = records.rows.size();
  s.steady_state_start = steady_state_start;
  bool any_steady = false;
  if (!records.rows.empty()) {
    const std::size_t tc = records.column("t");
    any_steady = std::any_of(records.rows.begin(), records.rows.end(),
                             [&](const auto& r) { return r[tc] >= steady_state_start; });
  }
  if (any_steady) s.steady_state.emplace();
  for (const std::string& ch : channels) {
    s.overall[ch] = channel_stats(records.values(ch));
    if (any_steady) (*s.steady_state)[ch] = channel_stats(records.values(ch, steady_state_start));
  }
  return s;
}

}  // namespace magtee
