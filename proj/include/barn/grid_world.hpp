#pragma once

// Occupancy-grid worlds: the raster itself, cellular-automata course
// generation, the Euclidean distance field and shortest-path search used to
// define each course's optimal traversal time.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "barn/common.hpp"
#include "barn/geometry.hpp"

namespace barn {

struct CellIndex {
  int col{0};
  int row{0};
  constexpr bool operator==(const CellIndex&) const = default;
};

/// Binary obstacle raster. Cell (0,0) has its lower-left corner at `origin`;
/// storage is row-major with row 0 at the bottom.
struct OccupancyGrid {
  double resolution{0.15};
  int width{0};
  int height{0};
  Vec2 origin{};
  std::vector<std::uint8_t> cells;

  OccupancyGrid() = default;
  OccupancyGrid(int w, int h, double res, Vec2 org = {})
      : resolution(res), width(w), height(h), origin(org),
        cells(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0) {}

  bool in_bounds(int col, int row) const {
    return col >= 0 && row >= 0 && col < width && row < height;
  }
  std::size_t index(int col, int row) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width) +
           static_cast<std::size_t>(col);
  }
  /// Out-of-bounds cells read as occupied.
  bool occupied(int col, int row) const {
    return !in_bounds(col, row) || cells[index(col, row)] != 0;
  }
  bool occupied(CellIndex c) const { return occupied(c.col, c.row); }
  void set(int col, int row, bool value) { cells[index(col, row)] = value ? 1 : 0; }

  CellIndex cell_of(Vec2 p) const {
    return {static_cast<int>(std::floor((p.x - origin.x) / resolution)),
            static_cast<int>(std::floor((p.y - origin.y) / resolution))};
  }
  Vec2 cell_center(int col, int row) const {
    return {origin.x + (col + 0.5) * resolution, origin.y + (row + 0.5) * resolution};
  }
  Vec2 cell_center(CellIndex c) const { return cell_center(c.col, c.row); }
  double extent_x() const { return width * resolution; }
  double extent_y() const { return height * resolution; }

  void fill_border() {
    for (int c = 0; c < width; ++c) {
      set(c, 0, true);
      set(c, height - 1, true);
    }
    for (int r = 0; r < height; ++r) {
      set(0, r, true);
      set(width - 1, r, true);
    }
  }

  bool operator==(const OccupancyGrid&) const = default;
};

/// Grid of `interior_w` x `interior_h` free cells wrapped in a one-cell wall.
inline OccupancyGrid make_walled_grid(int interior_w, int interior_h, double resolution) {
  OccupancyGrid g(interior_w + 2, interior_h + 2, resolution);
  g.fill_border();
  return g;
}

/// Per-cell Euclidean distance (meters) from each cell centre to the
/// nearest occupied cell centre. Occupied cells hold 0.
struct DistanceField {
  int width{0};
  int height{0};
  double resolution{0.0};
  std::vector<double> meters;

  double at(int col, int row) const {
    return meters[static_cast<std::size_t>(row) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(col)];
  }
  double at(CellIndex c) const { return at(c.col, c.row); }
};

namespace detail {

// One-dimensional squared distance transform of a sampled function
// (lower envelope of parabolas).
inline void distance_transform_1d(const std::vector<double>& f, std::vector<double>& d,
                                  std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  constexpr double inf = std::numeric_limits<double>::infinity();
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  d.assign(n, inf);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (!std::isfinite(f[q])) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -inf;
      z[1] = inf;
      continue;
    }
    double s = 0.0;
    while (true) {
      const int p = v[k];
      s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * (q - p));
      if (s <= z[k]) {
        --k;  // z[0] is -inf, so k stays >= 0
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  if (k < 0) return;
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double dq = q - v[j];
    d[q] = dq * dq + f[v[j]];
  }
}

}  // namespace detail

/// Exact Euclidean distance transform (separable lower-envelope method).
inline DistanceField distance_field(const OccupancyGrid& grid) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const int w = grid.width;
  const int h = grid.height;
  std::vector<double> sq(static_cast<std::size_t>(w) * h, inf);
  std::vector<double> f, d, z;
  std::vector<int> v;

  f.resize(h);
  for (int c = 0; c < w; ++c) {
    for (int r = 0; r < h; ++r) f[r] = grid.occupied(c, r) ? 0.0 : inf;
    detail::distance_transform_1d(f, d, v, z);
    for (int r = 0; r < h; ++r) sq[grid.index(c, r)] = d[r];
  }
  f.resize(w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) f[c] = sq[grid.index(c, r)];
    detail::distance_transform_1d(f, d, v, z);
    for (int c = 0; c < w; ++c) sq[grid.index(c, r)] = d[c];
  }

  DistanceField out{w, h, grid.resolution, std::vector<double>(sq.size())};
  for (std::size_t i = 0; i < sq.size(); ++i) {
    out.meters[i] = std::isfinite(sq[i]) ? std::sqrt(sq[i]) * grid.resolution : inf;
  }
  return out;
}

/// Slack applied to clearance comparisons so that an exact multiple of the
/// resolution is not rejected by rounding.
inline constexpr double kClearanceSlack = 1e-9;

inline bool traversable(const OccupancyGrid& grid, const DistanceField& field, int col,
                        int row, double clearance) {
  return !grid.occupied(col, row) && field.at(col, row) >= clearance - kClearanceSlack;
}

struct GridPath {
  std::vector<CellIndex> cells;
  std::vector<Vec2> points;
  double length{0.0};
};

/// The eight grid moves, orthogonal first.
inline constexpr std::array<std::array<int, 2>, 8> kGridMoves{{
    {1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {1, -1}, {-1, 1}, {-1, -1}}};

namespace detail {

inline GridPath trace_back(const OccupancyGrid& grid, const std::vector<int>& parent,
                           int goal_index, double length) {
  GridPath path;
  path.length = length;
  for (int i = goal_index; i >= 0; i = parent[static_cast<std::size_t>(i)]) {
    path.cells.push_back({i % grid.width, i / grid.width});
  }
  std::reverse(path.cells.begin(), path.cells.end());
  path.points.reserve(path.cells.size());
  for (const auto& c : path.cells) path.points.push_back(grid.cell_center(c));
  return path;
}

}  // namespace detail

/// Minimal-length 8-connected path between the cells containing `start` and
/// `goal`, restricted to cells whose distance to the nearest obstacle is at
/// least `clearance`. Throws NoPathError when the cells are disconnected.
inline GridPath shortest_path(const OccupancyGrid& grid, const DistanceField& field,
                              Vec2 start, Vec2 goal, double clearance) {
  const CellIndex s = grid.cell_of(start);
  const CellIndex g = grid.cell_of(goal);
  if (!grid.in_bounds(s.col, s.row) || !grid.in_bounds(g.col, g.row)) {
    throw NoPathError("start or goal outside the grid");
  }
  if (!traversable(grid, field, s.col, s.row, clearance) ||
      !traversable(grid, field, g.col, g.row, clearance)) {
    throw NoPathError("start or goal blocked at the requested clearance");
  }

  const std::size_t n = grid.cells.size();
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<int> parent(n, -1);
  using Entry = std::pair<double, int>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  const int s_idx = static_cast<int>(grid.index(s.col, s.row));
  const int g_idx = static_cast<int>(grid.index(g.col, g.row));
  dist[s_idx] = 0.0;
  open.push({0.0, s_idx});
  const double diag = std::sqrt(2.0) * grid.resolution;

  while (!open.empty()) {
    const auto [d, idx] = open.top();
    open.pop();
    if (d > dist[idx]) continue;
    if (idx == g_idx) return detail::trace_back(grid, parent, g_idx, d);
    const int c = idx % grid.width;
    const int r = idx / grid.width;
    for (std::size_t m = 0; m < kGridMoves.size(); ++m) {
      const int nc = c + kGridMoves[m][0];
      const int nr = r + kGridMoves[m][1];
      if (!grid.in_bounds(nc, nr) || !traversable(grid, field, nc, nr, clearance)) continue;
      const double nd = d + (m < 4 ? grid.resolution : diag);
      const int nidx = static_cast<int>(grid.index(nc, nr));
      if (nd < dist[nidx]) {
        dist[nidx] = nd;
        parent[nidx] = idx;
        open.push({nd, nidx});
      }
    }
  }
  throw NoPathError("goal unreachable from start");
}

inline GridPath shortest_path(const OccupancyGrid& grid, Vec2 start, Vec2 goal,
                              double clearance) {
  return shortest_path(grid, distance_field(grid), start, goal, clearance);
}

/// Time to cover `path_length` at `max_speed`.
inline double optimal_time(double path_length, double max_speed) {
  if (!(max_speed > 0.0)) throw std::invalid_argument("max_speed must be positive");
  return path_length / max_speed;
}

struct GeneratorParams {
  std::uint64_t seed{0};
  double fill_probability{0.44};
  int smoothing_iterations{3};
  int birth_threshold{5};
  int survival_threshold{4};

  double world_size{5.0};
  double resolution{0.15};
  /// A route with at least this clearance must link start and goal.
  double corridor_clearance{0.45};
  /// Clearance used for the recorded path length (robot half-width).
  double path_clearance{0.215};
  double max_speed{2.0};
  /// Distance from the inner face of the bottom wall to the start cell.
  double start_margin{0.375};
  /// Distance from the inner face of the top wall to the goal cell.
  double goal_margin{0.375};
  /// Radius kept free of obstacles around start and goal.
  double clearing_radius{0.5};
  int max_attempts{100};

  void validate() const {
    if (!(fill_probability >= 0.0 && fill_probability <= 1.0)) {
      throw std::invalid_argument("fill_probability must lie in [0, 1]");
    }
    if (smoothing_iterations < 0) throw std::invalid_argument("smoothing_iterations < 0");
    if (birth_threshold < 0 || birth_threshold > 8 || survival_threshold < 0 ||
        survival_threshold > 8) {
      throw std::invalid_argument("CA thresholds must lie in [0, 8]");
    }
    if (!(resolution > 0.0) || !(world_size > 0.0) || !(max_speed > 0.0)) {
      throw std::invalid_argument("resolution, world_size and max_speed must be positive");
    }
    if (max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");
  }
};

struct EnvironmentSpec {
  OccupancyGrid grid;
  Pose2 start;
  Vec2 goal;
  double path_length{0.0};
  double optimal_time{0.0};
  std::uint64_t seed{0};

  bool operator==(const EnvironmentSpec&) const = default;
};

/// Deterministic 64-bit stream (SplitMix64) used for the random fill.
class SeedStream {
 public:
  explicit SeedStream(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ull;
    return splitmix64(state_ - 0x9E3779B97F4A7C15ull);
  }
  double uniform() { return to_unit_interval(next()); }

 private:
  std::uint64_t state_;
};

/// One smoothing pass over the interior. Only interior neighbours are
/// counted: the wall ring is not part of the cave, so an empty fill stays
/// empty instead of growing from the corners.
inline OccupancyGrid cellular_automaton_step(const OccupancyGrid& grid, int birth,
                                             int survival) {
  OccupancyGrid next = grid;
  for (int r = 1; r < grid.height - 1; ++r) {
    for (int c = 1; c < grid.width - 1; ++c) {
      int n = 0;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const int nc = c + dc, nr = r + dr;
          if ((dr == 0 && dc == 0) || nc < 1 || nr < 1 || nc > grid.width - 2 ||
              nr > grid.height - 2) {
            continue;
          }
          if (grid.occupied(nc, nr)) ++n;
        }
      }
      if (n >= birth) {
        next.set(c, r, true);
      } else if (n < survival) {
        next.set(c, r, false);
      }
    }
  }
  return next;
}

/// Start and goal cells for a walled grid under the bottom-centre /
/// top-centre convention.
inline std::pair<CellIndex, CellIndex> start_goal_cells(const OccupancyGrid& grid,
                                                        const GeneratorParams& p) {
  const int col = grid.width / 2;
  const int start_row = 1 + static_cast<int>(std::floor(p.start_margin / grid.resolution + 1e-9));
  const int goal_row =
      grid.height - 2 - static_cast<int>(std::floor(p.goal_margin / grid.resolution + 1e-9));
  return {{col, start_row}, {col, goal_row}};
}

namespace detail {

inline void clear_disc(OccupancyGrid& grid, Vec2 center, double radius) {
  const double reach = radius + grid.resolution * std::sqrt(0.5);
  for (int r = 1; r < grid.height - 1; ++r) {
    for (int c = 1; c < grid.width - 1; ++c) {
      if ((grid.cell_center(c, r) - center).norm() <= reach) grid.set(c, r, false);
    }
  }
}

}  // namespace detail

/// Generates a walled course by random fill plus cellular-automata
/// smoothing. Grids without a start-goal corridor at
/// `corridor_clearance` are redrawn from the same seed stream; throws
/// GenerationError after `max_attempts` draws.
inline EnvironmentSpec generate_environment(const GeneratorParams& params) {
  params.validate();
  const int interior = static_cast<int>(std::lround(params.world_size / params.resolution));
  SeedStream rng(params.seed);

  for (int attempt = 0; attempt < params.max_attempts; ++attempt) {
    OccupancyGrid grid = make_walled_grid(interior, interior, params.resolution);
    for (int r = 1; r < grid.height - 1; ++r) {
      for (int c = 1; c < grid.width - 1; ++c) {
        grid.set(c, r, rng.uniform() < params.fill_probability);
      }
    }
    for (int i = 0; i < params.smoothing_iterations; ++i) {
      grid = cellular_automaton_step(grid, params.birth_threshold, params.survival_threshold);
    }
    const auto [s_cell, g_cell] = start_goal_cells(grid, params);
    const Vec2 start = grid.cell_center(s_cell);
    const Vec2 goal = grid.cell_center(g_cell);
    detail::clear_disc(grid, start, params.clearing_radius);
    detail::clear_disc(grid, goal, params.clearing_radius);

    const DistanceField field = distance_field(grid);
    try {
      shortest_path(grid, field, start, goal, params.corridor_clearance);
      const GridPath path = shortest_path(grid, field, start, goal, params.path_clearance);
      EnvironmentSpec env;
      env.grid = std::move(grid);
      env.start = {start.x, start.y, kPi / 2.0};
      env.goal = goal;
      env.path_length = path.length;
      env.optimal_time = optimal_time(path.length, params.max_speed);
      env.seed = params.seed;
      return env;
    } catch (const NoPathError&) {
      continue;
    }
  }
  throw GenerationError("no navigable course after " + std::to_string(params.max_attempts) +
                        " attempts; parameters are degenerate");
}

}  // namespace barn
