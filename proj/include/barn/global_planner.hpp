#pragma once

// Costmap inflation that grows with speed, A* global search over the
// inflated grid, radius back-off for tight passages and local-goal
// extraction along the resulting path.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <queue>
#include <vector>

#include "barn/common.hpp"
#include "barn/geometry.hpp"
#include "barn/grid_world.hpp"
#include "barn/simulator.hpp"

namespace barn {

struct InflationParams {
  double r_min{0.3};
  double r_max{0.6};
  double v_max{2.0};

  void validate() const {
    if (!(r_min > 0.0 && r_min <= r_max)) throw std::invalid_argument("need 0 < r_min <= r_max");
    if (!(v_max > 0.0)) throw std::invalid_argument("v_max must be positive");
  }
};

/// r_min + (v / v_max) * (r_max - r_min), with v clamped into [0, v_max].
inline double inflation_radius(double v, const InflationParams& p) {
  const double speed = std::clamp(v, 0.0, p.v_max);
  return p.r_min + (speed / p.v_max) * (p.r_max - p.r_min);
}

struct GlobalPlannerParams {
  InflationParams inflation{};
  /// Weight of the clearance penalty added per entered cell.
  double soft_weight{1.0};
  /// Cells with less clearance than this pay the penalty.
  double soft_radius{0.6};
  double lookahead{1.0};
  double replan_period{0.5};
  int backoff_halvings{3};
  /// Build the planning map from accumulated scans instead of the prior map.
  bool sensed_only_costmap{false};
  /// How far start/goal may be moved to reach a traversable cell.
  double snap_distance{0.6};
};

struct GlobalPath {
  std::vector<Vec2> waypoints;
  std::vector<double> cumulative_length;

  bool empty() const { return waypoints.empty(); }
  double length() const { return cumulative_length.empty() ? 0.0 : cumulative_length.back(); }

  static GlobalPath from_points(std::vector<Vec2> pts) {
    GlobalPath p;
    p.waypoints = std::move(pts);
    p.cumulative_length.resize(p.waypoints.size(), 0.0);
    for (std::size_t i = 1; i < p.waypoints.size(); ++i) {
      p.cumulative_length[i] =
          p.cumulative_length[i - 1] + (p.waypoints[i] - p.waypoints[i - 1]).norm();
    }
    return p;
  }

  /// Point at arc length `s`, clamped to the path ends.
  Vec2 point_at(double s) const {
    if (waypoints.size() == 1 || s <= 0.0) return waypoints.front();
    if (s >= length()) return waypoints.back();
    const auto it = std::upper_bound(cumulative_length.begin(), cumulative_length.end(), s);
    const std::size_t i = static_cast<std::size_t>(it - cumulative_length.begin());
    const double seg = cumulative_length[i] - cumulative_length[i - 1];
    const double t = seg > 0.0 ? (s - cumulative_length[i - 1]) / seg : 0.0;
    return waypoints[i - 1] + (waypoints[i] - waypoints[i - 1]) * t;
  }

  /// Direction of travel at arc length `s`.
  double heading_at(double s) const {
    if (waypoints.size() < 2) return 0.0;
    const double lo = std::clamp(s, 0.0, length());
    const Vec2 a = point_at(std::max(0.0, lo - 0.05));
    const Vec2 b = point_at(std::min(length(), lo + 0.05));
    return (b - a).angle();
  }

  /// Arc length of the point on the path nearest to `p`.
  double project(Vec2 p) const {
    if (waypoints.size() < 2) return 0.0;
    double best_d = std::numeric_limits<double>::infinity();
    double best_s = 0.0;
    for (std::size_t i = 1; i < waypoints.size(); ++i) {
      const Vec2 a = waypoints[i - 1];
      const Vec2 ab = waypoints[i] - a;
      const double len2 = ab.squared_norm();
      const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
      const double d = (p - (a + ab * t)).squared_norm();
      if (d < best_d) {
        best_d = d;
        best_s = cumulative_length[i - 1] + t * std::sqrt(len2);
      }
    }
    return best_s;
  }
};

struct LocalGoal {
  /// Target in the robot frame.
  Vec2 point;
  /// Unit vector toward `point`; +x when the goal coincides with the robot.
  Vec2 direction{1.0, 0.0};
  double distance{0.0};
};

/// A* over cells whose clearance is at least `r_infl`. Step cost is the move
/// length plus `soft_weight * max(0, soft_radius - clearance)` of the entered
/// cell; the Euclidean heuristic stays admissible. Throws NoPathError.
inline GlobalPath plan_global(const OccupancyGrid& grid, const DistanceField& field, Vec2 start,
                              Vec2 goal, double r_infl, double soft_weight = 0.0,
                              double soft_radius = 0.0) {
  const CellIndex s = grid.cell_of(start);
  const CellIndex g = grid.cell_of(goal);
  if (!grid.in_bounds(s.col, s.row) || !grid.in_bounds(g.col, g.row) ||
      !traversable(grid, field, s.col, s.row, r_infl) ||
      !traversable(grid, field, g.col, g.row, r_infl)) {
    throw NoPathError("start or goal inside the inflated obstacles");
  }
  const std::size_t n = grid.cells.size();
  std::vector<double> cost(n, std::numeric_limits<double>::infinity());
  std::vector<int> parent(n, -1);
  std::vector<std::uint8_t> closed(n, 0);
  using Entry = std::pair<double, int>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  const int s_idx = static_cast<int>(grid.index(s.col, s.row));
  const int g_idx = static_cast<int>(grid.index(g.col, g.row));
  const Vec2 goal_center = grid.cell_center(g);
  auto heuristic = [&](int c, int r) { return (grid.cell_center(c, r) - goal_center).norm(); };
  const double diag = std::sqrt(2.0) * grid.resolution;

  cost[s_idx] = 0.0;
  open.push({heuristic(s.col, s.row), s_idx});
  while (!open.empty()) {
    const int idx = open.top().second;
    open.pop();
    if (closed[idx]) continue;
    closed[idx] = 1;
    if (idx == g_idx) {
      std::vector<Vec2> pts;
      for (int i = g_idx; i >= 0; i = parent[static_cast<std::size_t>(i)]) {
        pts.push_back(grid.cell_center(i % grid.width, i / grid.width));
      }
      std::reverse(pts.begin(), pts.end());
      return GlobalPath::from_points(std::move(pts));
    }
    const int c = idx % grid.width;
    const int r = idx / grid.width;
    for (std::size_t m = 0; m < kGridMoves.size(); ++m) {
      const int nc = c + kGridMoves[m][0];
      const int nr = r + kGridMoves[m][1];
      if (!grid.in_bounds(nc, nr) || !traversable(grid, field, nc, nr, r_infl)) continue;
      const int nidx = static_cast<int>(grid.index(nc, nr));
      if (closed[nidx]) continue;
      const double penalty = soft_weight * std::max(0.0, soft_radius - field.at(nc, nr));
      const double nd = cost[idx] + (m < 4 ? grid.resolution : diag) + penalty;
      if (nd < cost[nidx]) {
        cost[nidx] = nd;
        parent[nidx] = idx;
        open.push({nd + heuristic(nc, nr), nidx});
      }
    }
  }
  throw NoPathError("no path at inflation radius " + std::to_string(r_infl));
}

inline GlobalPath plan_global(const OccupancyGrid& grid, Vec2 start, Vec2 goal, double r_infl,
                              double soft_weight = 0.0, double soft_radius = 0.0) {
  return plan_global(grid, distance_field(grid), start, goal, r_infl, soft_weight, soft_radius);
}

/// Radii tried by the back-off: r_infl(v), then the excess over r_min halved
/// `halvings` times, then r_min.
inline std::vector<double> backoff_radii(const InflationParams& p, double v, int halvings = 3) {
  const double r0 = inflation_radius(v, p);
  std::vector<double> radii{r0};
  double excess = r0 - p.r_min;
  for (int i = 0; i < halvings; ++i) {
    excess *= 0.5;
    radii.push_back(p.r_min + excess);
  }
  radii.push_back(p.r_min);
  radii.erase(std::unique(radii.begin(), radii.end()), radii.end());
  return radii;
}

inline GlobalPath replan_with_backoff(const OccupancyGrid& grid, const DistanceField& field,
                                      Vec2 start, Vec2 goal, const GlobalPlannerParams& params,
                                      double v, double* used_radius = nullptr) {
  for (double r : backoff_radii(params.inflation, v, params.backoff_halvings)) {
    try {
      GlobalPath path =
          plan_global(grid, field, start, goal, r, params.soft_weight, params.soft_radius);
      if (used_radius != nullptr) *used_radius = r;
      return path;
    } catch (const NoPathError&) {
    }
  }
  throw NoPathError("start and goal disconnected even at r_min");
}

inline GlobalPath replan_with_backoff(const OccupancyGrid& grid, Vec2 start, Vec2 goal,
                                      const GlobalPlannerParams& params, double v,
                                      double* used_radius = nullptr) {
  return replan_with_backoff(grid, distance_field(grid), start, goal, params, v, used_radius);
}

/// Path point `lookahead` meters past the robot's projection onto the path,
/// clamped to the path end, in the robot frame.
inline LocalGoal local_goal(const GlobalPath& path, const Pose2& pose, double lookahead) {
  const double s = path.project(pose.position());
  const Vec2 target = path.point_at(s + lookahead);
  LocalGoal g;
  g.point = pose.to_local(target);
  g.distance = g.point.norm();
  if (g.distance > 0.0) g.direction = g.point / g.distance;
  return g;
}

/// Obstacle map assembled only from scan endpoints.
class SensedCostmap {
 public:
  SensedCostmap() = default;
  explicit SensedCostmap(const OccupancyGrid& like)
      : grid_(like.width, like.height, like.resolution, like.origin) {}

  void integrate(const LidarScan& scan, const Pose2& pose) {
    for (std::size_t i = 0; i < scan.size(); ++i) {
      if (!scan.in_range(i)) continue;
      // Nudge past the hit face so the endpoint lands in the struck cell.
      const Vec2 p = pose.to_world(unit(scan.angles[i]) * (scan.ranges[i] + 1e-6));
      const CellIndex c = grid_.cell_of(p);
      if (grid_.in_bounds(c.col, c.row)) grid_.set(c.col, c.row, true);
    }
  }
  const OccupancyGrid& grid() const { return grid_; }

 private:
  OccupancyGrid grid_;
};

/// Owns the global plan for one trial: replans on a fixed period with
/// velocity-dependent inflation, moving start/goal onto the nearest
/// traversable cell when the robot sits inside the inflated band.
class NavigationSession {
 public:
  explicit NavigationSession(GlobalPlannerParams params = {}) : params_(params) {}

  void reset(const OccupancyGrid& map, Vec2 goal) {
    prior_ = &map;
    goal_ = goal;
    path_ = {};
    last_plan_time_ = -std::numeric_limits<double>::infinity();
    if (params_.sensed_only_costmap) {
      sensed_ = SensedCostmap(map);
      field_ = distance_field(sensed_.grid());
    } else {
      field_ = distance_field(map);
    }
  }

  /// Integrates the scan (sensed mode) and replans when the period elapsed
  /// or no path exists yet. Returns whether a path is available.
  bool update(double time, const Pose2& pose, double speed, const LidarScan* scan = nullptr) {
    if (params_.sensed_only_costmap && scan != nullptr) sensed_.integrate(*scan, pose);
    if (!path_.empty() && time - last_plan_time_ < params_.replan_period - 1e-9) return true;
    if (params_.sensed_only_costmap) field_ = distance_field(sensed_.grid());
    last_plan_time_ = time;
    for (double r : backoff_radii(params_.inflation, std::abs(speed), params_.backoff_halvings)) {
      const auto s = snap(pose.position(), r);
      const auto g = snap(goal_, r);
      if (!s || !g) continue;
      try {
        GlobalPath p = plan_global(costmap(), field_, *s, *g, r, params_.soft_weight,
                                   params_.soft_radius);
        std::vector<Vec2> pts;
        pts.reserve(p.waypoints.size() + 2);
        if ((*s - pose.position()).norm() > 1e-9) pts.push_back(pose.position());
        pts.insert(pts.end(), p.waypoints.begin(), p.waypoints.end());
        if ((pts.back() - goal_).norm() > 1e-9) pts.push_back(goal_);
        path_ = GlobalPath::from_points(std::move(pts));
        radius_ = r;
        return true;
      } catch (const NoPathError&) {
      }
    }
    return !path_.empty();
  }

  bool has_path() const { return !path_.empty(); }
  const GlobalPath& path() const { return path_; }
  double radius() const { return radius_; }
  const OccupancyGrid& costmap() const { return params_.sensed_only_costmap ? sensed_.grid() : *prior_; }
  const DistanceField& field() const { return field_; }
  const GlobalPlannerParams& params() const { return params_; }

 private:
  std::optional<Vec2> snap(Vec2 p, double radius) const {
    const OccupancyGrid& map = costmap();
    const CellIndex c = map.cell_of(p);
    if (map.in_bounds(c.col, c.row) && traversable(map, field_, c.col, c.row, radius)) return p;
    const int reach = static_cast<int>(std::ceil(params_.snap_distance / map.resolution));
    std::optional<Vec2> best;
    double best_d = params_.snap_distance;
    for (int dr = -reach; dr <= reach; ++dr) {
      for (int dc = -reach; dc <= reach; ++dc) {
        const int nc = c.col + dc;
        const int nr = c.row + dr;
        if (!map.in_bounds(nc, nr) || !traversable(map, field_, nc, nr, radius)) continue;
        const double d = (map.cell_center(nc, nr) - p).norm();
        if (d < best_d) {
          best_d = d;
          best = map.cell_center(nc, nr);
        }
      }
    }
    return best;
  }

  GlobalPlannerParams params_;
  const OccupancyGrid* prior_{nullptr};
  SensedCostmap sensed_;
  DistanceField field_;
  Vec2 goal_{};
  GlobalPath path_;
  double radius_{0.0};
  double last_plan_time_{0.0};
};

/// Writes an 8-bit PGM of the map (0 occupied, 128 inside `r_infl`,
/// 255 free) for debugging. Row 0 of the grid is the bottom image row.
inline void write_pgm(const OccupancyGrid& grid, double r_infl, const std::filesystem::path& file) {
  const DistanceField field = distance_field(grid);
  std::ofstream out(file, std::ios::binary);
  if (!out) throw FormatError("cannot write " + file.string());
  out << "P5\n" << grid.width << ' ' << grid.height << "\n255\n";
  for (int r = grid.height - 1; r >= 0; --r) {
    for (int c = 0; c < grid.width; ++c) {
      unsigned char v = 255;
      if (grid.occupied(c, r)) {
        v = 0;
      } else if (field.at(c, r) < r_infl - kClearanceSlack) {
        v = 128;
      }
      out.put(static_cast<char>(v));
    }
  }
}

}  // namespace barn
