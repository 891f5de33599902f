#pragma once

// Arc-length parameterized cubic-spline curve for the esophageal centerline.

#include <optional>
#include <string>
#include <vector>

#include "magtee/geometry.hpp"

namespace magtee {

class Centerline {
 public:
  /// Natural cubic spline through `points` (chord-length knots). Throws
  /// DomainError for fewer than 4 points, coincident neighbours, or a total
  /// length below 0.05 m.
  static Centerline fit(const std::vector<Vec3>& points);

  double length() const { return cumulative_.back(); }
  const std::vector<Vec3>& points() const { return points_; }

  /// Queries by arc length s, clamped to [0, length()].
  Vec3 position(double s) const;
  Vec3 tangent(double s) const;
  double curvature(double s) const;
  /// Unit vector perpendicular to the tangent in the vertical plane through
  /// it (pointing up).
  Vec3 desired_moment(double s) const;
  /// Frame with x along the tangent and z = desired_moment.
  Pose frame(double s) const;

  struct Closest {
    double s = 0.0;
    Vec3 point = Vec3::Zero();
    double distance = 0.0;
  };
  /// Closest point on the curve; `hint` speeds up the search near a previous answer.
  Closest closest(const Vec3& p, std::optional<double> hint = std::nullopt) const;

 private:
  struct Segment {
    double u0 = 0.0, h = 0.0;       // knot and span of the chord parameter
    Vec3 a, b, c, d;                // p(t) = a + b t + c t^2 + d t^3, t = u - u0
  };

  std::size_t segment_for_u(double u) const;
  double u_from_s(double s) const;
  Vec3 eval(double u, int derivative) const;
  double arc_length(std::size_t seg, double t0, double t1) const;

  std::vector<Vec3> points_;
  std::vector<Segment> segments_;
  std::vector<double> cumulative_;  // arc length at each knot
};

/// Parses a JSON array of [x, y, z] points. Throws ConfigError on bad input.
std::vector<Vec3> parse_centerline_json(const std::string& text);

}  // namespace magtee
