#include "magtee/centerline.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/quadrature/gauss.hpp>
#include <json.hpp>

#include "magtee/errors.hpp"

namespace magtee {

Centerline Centerline::fit(const std::vector<Vec3>& points) {
  if (points.size() < 4) throw DomainError("centerline needs at least 4 points");
  const std::size_t n = points.size();
  std::vector<double> u(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) {
    if (!points[i].allFinite()) throw DomainError("non-finite centerline point");
    const double chord = (points[i] - points[i - 1]).norm();
    if (chord < 1e-9) throw DomainError("coincident centerline points at index " + std::to_string(i));
    u[i] = u[i - 1] + chord;
  }

  // Natural spline: second derivatives M with M_0 = M_{n-1} = 0, solved per
  // coordinate with the Thomas algorithm.
  std::vector<Vec3> m(n, Vec3::Zero());
  {
    const std::size_t k = n - 2;
    std::vector<double> diag(k), upper(k), lower(k);
    std::vector<Vec3> rhs(k);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double h0 = u[i] - u[i - 1], h1 = u[i + 1] - u[i];
      lower[i - 1] = h0;
      diag[i - 1] = 2.0 * (h0 + h1);
      upper[i - 1] = h1;
      rhs[i - 1] = 6.0 * ((points[i + 1] - points[i]) / h1 - (points[i] - points[i - 1]) / h0);
    }
    for (std::size_t i = 1; i < k; ++i) {
      const double w = lower[i] / diag[i - 1];
      diag[i] -= w * upper[i - 1];
      rhs[i] -= w * rhs[i - 1];
    }
    for (std::size_t i = k; i-- > 0;) {
      Vec3 v = rhs[i];
      if (i + 1 < k) v -= upper[i] * m[i + 2];
      m[i + 1] = v / diag[i];
    }
  }

  Centerline c;
  c.points_ = points;
  c.segments_.resize(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    Segment& s = c.segments_[i];
    s.u0 = u[i];
    s.h = u[i + 1] - u[i];
    s.a = points[i];
    s.b = (points[i + 1] - points[i]) / s.h - s.h * (2.0 * m[i] + m[i + 1]) / 6.0;
    s.c = m[i] / 2.0;
    s.d = (m[i + 1] - m[i]) / (6.0 * s.h);
  }
  c.cumulative_.assign(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    c.cumulative_[i + 1] = c.cumulative_[i] + c.arc_length(i, 0.0, c.segments_[i].h);
  }
  if (c.length() <= 0.05) throw DomainError("centerline shorter than 0.05 m");
  return c;
}

std::size_t Centerline::segment_for_u(double u) const {
  auto it = std::upper_bound(segments_.begin(), segments_.end(), u,
                             [](double v, const Segment& s) { return v < s.u0; });
  const std::size_t idx = it == segments_.begin() ? 0 : static_cast<std::size_t>(it - segments_.begin()) - 1;
  return std::min(idx, segments_.size() - 1);
}

Vec3 Centerline::eval(double u, int derivative) const {
  const Segment& s = segments_[segment_for_u(u)];
  const double t = std::clamp(u - s.u0, 0.0, s.h);
  switch (derivative) {
    case 0: return s.a + t * (s.b + t * (s.c + t * s.d));
    case 1: return s.b + t * (2.0 * s.c + 3.0 * t * s.d);
    default: return 2.0 * s.c + 6.0 * t * s.d;
  }
}

double Centerline::arc_length(std::size_t seg, double t0, double t1) const {
  const Segment& s = segments_[seg];
  auto speed = [&s](double t) { return (s.b + t * (2.0 * s.c + 3.0 * t * s.d)).norm(); };
  return boost::math::quadrature::gauss<double, 20>::integrate(speed, t0, t1);
}

double Centerline::u_from_s(double s) const {
  s = std::clamp(s, 0.0, length());
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
  std::size_t seg = it == cumulative_.begin() ? 0 : static_cast<std::size_t>(it - cumulative_.begin()) - 1;
  seg = std::min(seg, segments_.size() - 1);
  const Segment& sg = segments_[seg];
  const double target = s - cumulative_[seg];
  const double seg_len = cumulative_[seg + 1] - cumulative_[seg];
  double t = seg_len > 0.0 ? sg.h * target / seg_len : 0.0;
  for (int iter = 0; iter < 20; ++iter) {
    const double f = arc_length(seg, 0.0, t) - target;
    const double df = (sg.b + t * (2.0 * sg.c + 3.0 * t * sg.d)).norm();
    if (df <= 0.0) break;
    const double step = f / df;
    t = std::clamp(t - step, 0.0, sg.h);
    if (std::abs(step) < 1e-13) break;
  }
  return sg.u0 + t;
}

Vec3 Centerline::position(double s) const { return eval(u_from_s(s), 0); }

Vec3 Centerline::tangent(double s) const { return eval(u_from_s(s), 1).normalized(); }

double Centerline::curvature(double s) const {
  const double u = u_from_s(s);
  const Vec3 d1 = eval(u, 1), d2 = eval(u, 2);
  const double sp = d1.norm();
  return d1.cross(d2).norm() / (sp * sp * sp);
}

Vec3 Centerline::desired_moment(double s) const {
  const Vec3 t = tangent(s);
  const Vec3 up = Vec3::UnitZ() - t.z() * t;
  if (up.norm() < 1e-9) return any_perpendicular(t);
  return up.normalized();
}

Pose Centerline::frame(double s) const {
  Pose p;
  p.position = position(s);
  const Vec3 x = tangent(s);
  const Vec3 z = desired_moment(s);
  p.orientation.col(0) = x;
  p.orientation.col(1) = z.cross(x);
  p.orientation.col(2) = z;
  return p;
}

Centerline::Closest Centerline::closest(const Vec3& p, std::optional<double> hint) const {
  // Coarse scan (full or near the hint), then golden-section refinement.
  const double len = length();
  double lo = 0.0, hi = len;
  if (hint) {
    lo = std::max(0.0, *hint - 0.03);
    hi = std::min(len, *hint + 0.03);
  }
  const int samples = hint ? 32 : 200;
  double best_s = lo, best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= samples; ++i) {
    const double s = lo + (hi - lo) * i / samples;
    const double d = (position(s) - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best_s = s;
    }
  }
  const double step = (hi - lo) / samples;
  double a = std::max(0.0, best_s - step), b = std::min(len, best_s + step);
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = (position(x1) - p).squaredNorm(), f2 = (position(x2) - p).squaredNorm();
  for (int i = 0; i < 60 && b - a > 1e-12; ++i) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = (position(x1) - p).squaredNorm();
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = (position(x2) - p).squaredNorm();
    }
  }
  Closest c;
  c.s = 0.5 * (a + b);
  c.point = position(c.s);
  c.distance = (c.point - p).norm();
  return c;
}

std::vector<Vec3> parse_centerline_json(const std::string& text) {
  std::vector<Vec3> pts;
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    if (!j.is_array()) throw ConfigError("centerline JSON must be an array of [x, y, z]");
    for (const auto& e : j) {
      if (!e.is_array() || e.size() != 3) throw ConfigError("centerline point must be [x, y, z]");
      pts.emplace_back(e[0].get<double>(), e[1].get<double>(), e[2].get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed centerline JSON: ") + e.what());
  }
  return pts;
}

}  // namespace magtee
