#pragma once

// Robot-frame obstacle point sets kept in bearing order, so geometric checks
// can restrict themselves to the points inside a range/bearing window.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "barn/geometry.hpp"
#include "barn/grid_world.hpp"
#include "barn/simulator.hpp"

namespace barn {

struct ScanPoint {
  Vec2 p;
  double range{0.0};
  double bearing{0.0};
  /// Beam index for LiDAR returns; negative for points from other sources.
  int index{-1};
};

/// Bearing-sorted obstacle points in a robot-centred frame.
class PointSet {
 public:
  PointSet() = default;

  /// In-range returns of a scan, already bearing-ordered by construction.
  static PointSet from_scan(const LidarScan& scan) {
    PointSet s;
    s.points_.reserve(scan.size());
    for (std::size_t i = 0; i < scan.size(); ++i) {
      if (!scan.in_range(i)) continue;
      s.points_.push_back({scan.point(i), scan.ranges[i], scan.angles[i], static_cast<int>(i)});
    }
    s.sort();
    return s;
  }

  static PointSet from_points(std::span<const Vec2> pts, int first_index = -1) {
    PointSet s;
    s.add(pts, first_index);
    return s;
  }

  /// Appends points; `first_index` labels the first, decreasing from there
  /// when negative and increasing otherwise.
  void add(std::span<const Vec2> pts, int first_index = -1) {
    int idx = first_index;
    for (const auto& p : pts) {
      points_.push_back({p, p.norm(), p.angle(), idx});
      idx += first_index < 0 ? -1 : 1;
    }
    sort();
  }

  /// The same obstacles seen from `pose` (expressed in the current frame).
  PointSet transformed_to(const Pose2& pose) const {
    PointSet s;
    s.points_.reserve(points_.size());
    for (const auto& sp : points_) {
      const Vec2 q = pose.to_local(sp.p);
      s.points_.push_back({q, q.norm(), q.angle(), sp.index});
    }
    s.sort();
    return s;
  }

  std::span<const ScanPoint> points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

  /// Visits points with bearing in [lo, hi] (radians, lo <= hi, both within
  /// [-pi, pi]) and range in [r_lo, r_hi]. The visitor returns true to stop.
  template <typename Visitor>
  bool visit_window(double lo, double hi, double r_lo, double r_hi, Visitor&& visit) const {
    auto first = std::lower_bound(points_.begin(), points_.end(), lo,
                                  [](const ScanPoint& sp, double b) { return sp.bearing < b; });
    for (auto it = first; it != points_.end() && it->bearing <= hi; ++it) {
      if (it->range < r_lo || it->range > r_hi) continue;
      if (visit(*it)) return true;
    }
    return false;
  }

 private:
  void sort() {
    std::stable_sort(points_.begin(), points_.end(),
                     [](const ScanPoint& a, const ScanPoint& b) { return a.bearing < b.bearing; });
  }

  std::vector<ScanPoint> points_;
};

/// Range/bearing window of a convex shape as seen from the sensor origin.
struct SensorWindow {
  double r_lo{0.0};
  double r_hi{0.0};
  /// Up to two bearing intervals (a window straddling +-pi is split).
  std::array<std::array<double, 2>, 2> bearings{};
  int bearing_count{0};
};

/// Window enclosing a convex polygon. When the origin lies inside, the
/// bearing window is the full circle and the inner radius is zero.
inline SensorWindow sensor_window(std::span<const Vec2> convex) {
  SensorWindow w;
  for (const auto& v : convex) w.r_hi = std::max(w.r_hi, v.norm());
  const bool contains_origin = point_in_polygon({0.0, 0.0}, convex) ||
                               distance_to_boundary({0.0, 0.0}, convex) < 1e-12;
  if (contains_origin) {
    w.bearings[0] = {-kPi, kPi};
    w.bearing_count = 1;
    return w;
  }
  w.r_lo = distance_to_boundary({0.0, 0.0}, convex);
  // A convex polygon not containing the origin subtends less than pi, so
  // bearings relative to the first vertex stay within (-pi, pi).
  const double ref = convex[0].angle();
  double lo = 0.0, hi = 0.0;
  for (const auto& v : convex) {
    const double rel = wrap_angle(v.angle() - ref);
    lo = std::min(lo, rel);
    hi = std::max(hi, rel);
  }
  constexpr double pad = 1e-9;
  double a = ref + lo - pad;
  double b = ref + hi + pad;
  if (a < -kPi) {
    w.bearings[0] = {a + kTwoPi, kPi};
    w.bearings[1] = {-kPi, b};
    w.bearing_count = 2;
  } else if (b > kPi) {
    w.bearings[0] = {a, kPi};
    w.bearings[1] = {-kPi, b - kTwoPi};
    w.bearing_count = 2;
  } else {
    w.bearings[0] = {a, b};
    w.bearing_count = 1;
  }
  w.r_lo = std::max(0.0, w.r_lo - pad);
  w.r_hi += pad;
  return w;
}

/// Visits the points of `points` inside the sensor window of `convex`.
template <typename Visitor>
bool visit_candidates(const PointSet& points, const SensorWindow& w, Visitor&& visit) {
  for (int i = 0; i < w.bearing_count; ++i) {
    if (points.visit_window(w.bearings[i][0], w.bearings[i][1], w.r_lo, w.r_hi, visit)) {
      return true;
    }
  }
  return false;
}

/// Occupied cells of `map` within `radius` of the robot that fall in the
/// rear sector the LiDAR cannot see (bearing magnitude above
/// `field_of_view / 2`). Returned in world coordinates (cell centres).
inline std::vector<Vec2> blind_spot_cells(const OccupancyGrid& map, const Pose2& pose,
                                          double radius, double field_of_view = 1.5 * kPi) {
  std::vector<Vec2> out;
  const double half_fov = 0.5 * field_of_view;
  const CellIndex lo = map.cell_of({pose.x - radius, pose.y - radius});
  const CellIndex hi = map.cell_of({pose.x + radius, pose.y + radius});
  for (int r = std::max(0, lo.row); r <= std::min(map.height - 1, hi.row); ++r) {
    for (int c = std::max(0, lo.col); c <= std::min(map.width - 1, hi.col); ++c) {
      if (!map.occupied(c, r)) continue;
      const Vec2 local = pose.to_local(map.cell_center(c, r));
      if (local.norm() > radius) continue;
      if (std::abs(local.angle()) <= half_fov) continue;
      out.push_back(map.cell_center(c, r));
    }
  }
  return out;
}

/// Points along the faces of the given occupied cells (world cell centres)
/// that border free space, at most `spacing` apart. A recalled wall is then
/// seen at its face, as a LiDAR return would be, not half a cell behind it.
inline std::vector<Vec2> exposed_faces(const OccupancyGrid& map, std::span<const Vec2> centres,
                                       double spacing = 0.025) {
  std::vector<Vec2> out;
  const double h = 0.5 * map.resolution;
  const int n = std::max(1, static_cast<int>(std::ceil(map.resolution / spacing)));
  for (const auto& centre : centres) {
    const CellIndex c = map.cell_of(centre);
    for (const auto& m : {std::array<int, 2>{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
      if (map.occupied(c.col + m[0], c.row + m[1])) continue;
      const Vec2 normal{static_cast<double>(m[0]), static_cast<double>(m[1])};
      const Vec2 along{-normal.y, normal.x};
      for (int i = 0; i <= n; ++i) {
        out.push_back(centre + normal * h + along * (h * (2.0 * i / n - 1.0)));
      }
    }
  }
  return out;
}

}  // namespace barn
