#pragma once

// Kinematic differential-drive simulation: wheel-speed slewing with exact
// arc integration, a 270 degree planar LiDAR raycaster, footprint collision
// checks and the closed-loop trial runner.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "barn/common.hpp"
#include "barn/geometry.hpp"
#include "barn/grid_world.hpp"

namespace barn {

struct RobotParams {
  Footprint footprint{0.508, 0.430};
  double wheel_separation{0.37};
  double max_speed{2.0};
  /// Per-wheel; infinity disables slewing.
  double max_wheel_accel{3.0};
  double control_period{0.1};
  double sim_substep{0.01};
};

struct VelocityCommand {
  double v{0.0};
  double omega{0.0};
  constexpr bool operator==(const VelocityCommand&) const = default;
};

struct RobotState {
  double x{0.0};
  double y{0.0};
  double theta{0.0};
  double vl{0.0};
  double vr{0.0};

  constexpr Pose2 pose() const { return {x, y, theta}; }
  constexpr double v() const { return 0.5 * (vr + vl); }
  constexpr double omega(double wheel_separation) const { return (vr - vl) / wheel_separation; }
};

struct WheelSpeeds {
  double left{0.0};
  double right{0.0};
};

constexpr WheelSpeeds to_wheels(const VelocityCommand& cmd, double wheel_separation) {
  const double half = 0.5 * cmd.omega * wheel_separation;
  return {cmd.v - half, cmd.v + half};
}

constexpr VelocityCommand to_command(double vr, double vl, double wheel_separation) {
  return {0.5 * (vr + vl), (vr - vl) / wheel_separation};
}

/// Scales a command so neither wheel exceeds `max_speed`; curvature is kept.
inline VelocityCommand clamp_to_feasible(const VelocityCommand& cmd, const RobotParams& robot,
                                         bool* clamped = nullptr) {
  const WheelSpeeds w = to_wheels(cmd, robot.wheel_separation);
  const double peak = std::max(std::abs(w.left), std::abs(w.right));
  if (clamped != nullptr) *clamped = peak > robot.max_speed;
  if (peak <= robot.max_speed) return cmd;
  const double s = robot.max_speed / peak;
  return {cmd.v * s, cmd.omega * s};
}

struct StepResult {
  RobotState state;
  /// The command exceeded the wheel speed limit and was scaled down.
  bool clamped{false};
};

/// Advances the robot by `dt`: wheel speeds slew toward the command's wheel
/// targets (bounded by max_wheel_accel * dt), then the pose follows the exact
/// constant-(v, omega) arc of the new wheel speeds.
inline StepResult step(const RobotState& state, const VelocityCommand& cmd, double dt,
                       const RobotParams& robot) {
  StepResult out;
  const VelocityCommand feasible = clamp_to_feasible(cmd, robot, &out.clamped);
  const WheelSpeeds target = to_wheels(feasible, robot.wheel_separation);
  const double dv = robot.max_wheel_accel * dt;
  auto slew = [dv](double current, double goal) {
    return std::clamp(goal, current - dv, current + dv);
  };
  RobotState next = state;
  next.vl = slew(state.vl, target.left);
  next.vr = slew(state.vr, target.right);
  const Pose2 p = integrate_arc(state.pose(), next.v(), next.omega(robot.wheel_separation), dt);
  next.x = p.x;
  next.y = p.y;
  next.theta = p.theta;
  out.state = next;
  return out;
}

struct LidarParams {
  int num_beams{720};
  double field_of_view{1.5 * kPi};
  double max_range{10.0};
  double noise_sigma{0.0};
};

/// Beam bearings in the robot frame: one per equal sector of the field of
/// view, taken at sector centres so the set is mirror-symmetric about x.
inline std::vector<double> beam_angles(const LidarParams& lidar) {
  std::vector<double> a(static_cast<std::size_t>(lidar.num_beams));
  const double inc = lidar.field_of_view / lidar.num_beams;
  for (int i = 0; i < lidar.num_beams; ++i) {
    a[static_cast<std::size_t>(i)] = -0.5 * lidar.field_of_view + (i + 0.5) * inc;
  }
  return a;
}

struct LidarScan {
  std::vector<double> angles;
  std::vector<double> ranges;
  double max_range{10.0};

  std::size_t size() const { return ranges.size(); }
  bool in_range(std::size_t i) const { return ranges[i] < max_range; }
  Vec2 point(std::size_t i) const { return unit(angles[i]) * ranges[i]; }
};

/// Distance along a ray to the first occupied cell (grid traversal),
/// or `max_range` when nothing is hit sooner.
inline double cast_ray(const OccupancyGrid& grid, Vec2 origin, double angle, double max_range) {
  const Vec2 dir = unit(angle);
  const double res = grid.resolution;
  const Vec2 rel = origin - grid.origin;
  int col = static_cast<int>(std::floor(rel.x / res));
  int row = static_cast<int>(std::floor(rel.y / res));
  constexpr double inf = std::numeric_limits<double>::infinity();
  const int step_c = dir.x > 0 ? 1 : -1;
  const int step_r = dir.y > 0 ? 1 : -1;
  const double delta_x = dir.x != 0.0 ? res / std::abs(dir.x) : inf;
  const double delta_y = dir.y != 0.0 ? res / std::abs(dir.y) : inf;
  double next_x = inf;
  double next_y = inf;
  if (dir.x != 0.0) {
    const double boundary = (dir.x > 0 ? col + 1 : col) * res;
    next_x = (boundary - rel.x) / dir.x;
  }
  if (dir.y != 0.0) {
    const double boundary = (dir.y > 0 ? row + 1 : row) * res;
    next_y = (boundary - rel.y) / dir.y;
  }
  while (true) {
    double t;
    if (next_x < next_y) {
      t = next_x;
      next_x += delta_x;
      col += step_c;
    } else {
      t = next_y;
      next_y += delta_y;
      row += step_r;
    }
    if (t >= max_range) return max_range;
    if (grid.occupied(col, row)) return std::max(t, 1e-9);
  }
}

/// Simulated 2D scan from `pose`. Throws InvalidSensingState when the sensor
/// sits inside an occupied cell. `noise` (optional) perturbs ranges with
/// Gaussian noise of `lidar.noise_sigma`.
inline LidarScan raycast_scan(const OccupancyGrid& grid, const Pose2& pose,
                              const LidarParams& lidar, std::mt19937_64* noise = nullptr) {
  if (grid.occupied(grid.cell_of(pose.position()))) {
    throw InvalidSensingState("LiDAR origin inside an occupied cell");
  }
  LidarScan scan;
  scan.max_range = lidar.max_range;
  scan.angles = beam_angles(lidar);
  scan.ranges.resize(scan.angles.size());
  std::normal_distribution<double> gauss(0.0, lidar.noise_sigma > 0 ? lidar.noise_sigma : 1.0);
  for (std::size_t i = 0; i < scan.angles.size(); ++i) {
    double r = cast_ray(grid, pose.position(), pose.theta + scan.angles[i], lidar.max_range);
    if (noise != nullptr && lidar.noise_sigma > 0.0 && r < lidar.max_range) {
      r = std::clamp(r + gauss(*noise), 1e-3, lidar.max_range);
    }
    scan.ranges[i] = r;
  }
  return scan;
}

/// True iff the oriented footprint at `pose` touches any occupied cell
/// (cells treated as closed squares; separating-axis test per cell).
inline bool check_collision(const OccupancyGrid& grid, const Pose2& pose,
                            const Footprint& footprint) {
  const auto corners = footprint.corners(pose);
  double min_x = corners[0].x, max_x = corners[0].x;
  double min_y = corners[0].y, max_y = corners[0].y;
  for (const auto& c : corners) {
    min_x = std::min(min_x, c.x);
    max_x = std::max(max_x, c.x);
    min_y = std::min(min_y, c.y);
    max_y = std::max(max_y, c.y);
  }
  const double res = grid.resolution;
  const int c0 = static_cast<int>(std::floor((min_x - grid.origin.x) / res));
  const int c1 = static_cast<int>(std::floor((max_x - grid.origin.x) / res));
  const int r0 = static_cast<int>(std::floor((min_y - grid.origin.y) / res));
  const int r1 = static_cast<int>(std::floor((max_y - grid.origin.y) / res));
  const Vec2 axis_u = unit(pose.theta);
  const Vec2 axis_v = {-axis_u.y, axis_u.x};
  const double hl = footprint.half_length();
  const double hw = footprint.half_width();
  const double half_cell = 0.5 * res;

  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      if (!grid.occupied(c, r)) continue;
      const Vec2 center = grid.cell_center(c, r);
      const Vec2 d = center - pose.position();
      const double ext_x = hl * std::abs(axis_u.x) + hw * std::abs(axis_v.x);
      const double ext_y = hl * std::abs(axis_u.y) + hw * std::abs(axis_v.y);
      if (std::abs(d.x) > ext_x + half_cell) continue;
      if (std::abs(d.y) > ext_y + half_cell) continue;
      const double cell_u = half_cell * (std::abs(axis_u.x) + std::abs(axis_u.y));
      const double cell_v = half_cell * (std::abs(axis_v.x) + std::abs(axis_v.y));
      if (std::abs(d.dot(axis_u)) > hl + cell_u) continue;
      if (std::abs(d.dot(axis_v)) > hw + cell_v) continue;
      return true;
    }
  }
  return false;
}

// ---------------------------------------------------------------------------
// Closed-loop trials

struct PlannerInput {
  double time{0.0};
  const RobotState& state;
  const LidarScan& scan;
  /// Map available to the planner for global planning and blind-spot recall.
  const OccupancyGrid& map;
  Vec2 goal;
};

struct PlannerOutput {
  VelocityCommand cmd;
  /// Planner-specific behaviour label recorded in the trajectory log.
  std::string mode;
  bool reversing{false};
  std::optional<double> nearest_obstacle;
};

class Planner {
 public:
  virtual ~Planner() = default;
  /// Called once before a trial starts.
  virtual void reset(const EnvironmentSpec& env) { (void)env; }
  virtual PlannerOutput plan(const PlannerInput& input) = 0;
};

/// Constant command, used for the straight-line and null baselines.
class ConstantPlanner final : public Planner {
 public:
  explicit ConstantPlanner(VelocityCommand cmd) : cmd_(cmd) {}
  PlannerOutput plan(const PlannerInput&) override { return {cmd_, {}, false, std::nullopt}; }

 private:
  VelocityCommand cmd_;
};

enum class TrialOutcome { success, collision, timeout, error };

inline const char* to_string(TrialOutcome o) {
  switch (o) {
    case TrialOutcome::success: return "success";
    case TrialOutcome::collision: return "collision";
    case TrialOutcome::timeout: return "timeout";
    case TrialOutcome::error: return "error";
  }
  return "unknown";
}

struct TrajectorySample {
  double t{0.0};
  Pose2 pose;
  VelocityCommand cmd;
  std::string mode;
  bool reversing{false};
  std::optional<double> nearest_obstacle;

  bool operator==(const TrajectorySample&) const = default;
};

struct TrialRecord {
  TrialOutcome outcome{TrialOutcome::timeout};
  double actual_time{0.0};
  std::vector<TrajectorySample> trajectory;
  std::optional<Pose2> collision_pose;
  std::string diagnostic;

  bool success() const { return outcome == TrialOutcome::success; }
  bool operator==(const TrialRecord&) const = default;
};

struct TrialLimits {
  double timeout{100.0};
  double goal_tolerance{0.3};
};

/// Runs one closed-loop trial: scan, plan, then integrate the command over
/// the control period in substeps, checking collision and goal arrival after
/// every substep. Times are simulated seconds.
inline TrialRecord run_trial(const EnvironmentSpec& env, Planner& planner,
                             const RobotParams& robot, const LidarParams& lidar,
                             const TrialLimits& limits, std::uint64_t seed = 0) {
  TrialRecord record;
  RobotState state{env.start.x, env.start.y, env.start.theta, 0.0, 0.0};
  std::mt19937_64 noise(seed);
  const int substeps =
      std::max(1, static_cast<int>(std::lround(robot.control_period / robot.sim_substep)));
  const double dt = robot.control_period / substeps;

  auto finish = [&](TrialOutcome outcome, double t, const VelocityCommand& cmd) {
    record.outcome = outcome;
    record.actual_time = t;
    record.trajectory.push_back({t, state.pose(), cmd, {}, false, std::nullopt});
    return record;
  };

  if (check_collision(env.grid, state.pose(), robot.footprint)) {
    record.collision_pose = state.pose();
    return finish(TrialOutcome::collision, 0.0, {});
  }
  planner.reset(env);

  VelocityCommand cmd{};
  for (long tick = 0;; ++tick) {
    const double t = tick * robot.control_period;
    if (t >= limits.timeout - 1e-9) return finish(TrialOutcome::timeout, limits.timeout, cmd);

    PlannerOutput out;
    try {
      const LidarScan scan = raycast_scan(env.grid, state.pose(), lidar, &noise);
      out = planner.plan({t, state, scan, env.grid, env.goal});
    } catch (const std::exception& e) {
      record.diagnostic = e.what();
      return finish(TrialOutcome::error, t, cmd);
    }
    cmd = out.cmd;
    record.trajectory.push_back(
        {t, state.pose(), cmd, out.mode, out.reversing, out.nearest_obstacle});

    for (int k = 1; k <= substeps; ++k) {
      state = step(state, cmd, dt, robot).state;
      const double now = t + k * dt;
      if (check_collision(env.grid, state.pose(), robot.footprint)) {
        record.collision_pose = state.pose();
        return finish(TrialOutcome::collision, now, cmd);
      }
      if ((state.pose().position() - env.goal).norm() <= limits.goal_tolerance) {
        return finish(TrialOutcome::success, now, cmd);
      }
    }
  }
}

}  // namespace barn
