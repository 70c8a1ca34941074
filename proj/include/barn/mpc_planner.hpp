#pragma once

// Receding-horizon trajectory optimisation over wheel speeds. States come
// from rolling the exact-arc model forward, so the dynamics hold by
// construction; the objective tracks a reference resampled from the global
// path, keeps wheel accelerations smooth and penalises obstacle proximity.
// A proximity supervisor switches parameter sets (Safe, ObstaclePresent,
// CloseObstacle) and primes reverse motion when the path points backwards.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "barn/common.hpp"
#include "barn/geometry.hpp"
#include "barn/global_planner.hpp"
#include "barn/perception.hpp"
#include "barn/simulator.hpp"

namespace barn {

struct MpcParams {
  int horizon{20};
  double dt{0.1};
  double w_v{1.0};
  double w_x{10.0};
  double w_a{0.1};
  double w_obs{50.0};
  /// Terminal heading pull used in ObstaclePresent mode.
  double w_heading{2.0};
  double d_obs{0.35};
  double max_wheel_speed{2.0};
  double max_wheel_accel{3.0};
  double wheel_separation{0.37};
  int max_iterations{60};
  /// Stop when the projected step is shorter than this (m/s).
  double tolerance{1e-7};

  double v_ref_safe{1.8};
  double v_ref_obstacle{0.8};
  double v_ref_close{0.3};
  double close_obs_factor{2.0};

  double safe_distance{1.0};
  double close_distance{0.5};
  double hysteresis{0.05};
  int lidar_stride{15};
  double blind_spot_extra{0.3};

  void validate() const {
    if (horizon < 2) throw std::invalid_argument("mpc horizon must be at least 2");
    if (!(dt > 0.0)) throw std::invalid_argument("mpc dt must be positive");
    if (w_v < 0 || w_x < 0 || w_a < 0 || w_obs < 0 || w_heading < 0) {
      throw std::invalid_argument("mpc weights must be nonnegative");
    }
    if (!(max_wheel_speed > 0.0) || !(max_wheel_accel > 0.0) || !(wheel_separation > 0.0)) {
      throw std::invalid_argument("mpc wheel limits must be positive");
    }
    if (lidar_stride < 1) throw std::invalid_argument("lidar_stride must be at least 1");
  }
};

enum class ProximityMode { safe, obstacle_present, close_obstacle };

inline const char* to_string(ProximityMode m) {
  switch (m) {
    case ProximityMode::safe: return "Safe";
    case ProximityMode::obstacle_present: return "ObstaclePresent";
    case ProximityMode::close_obstacle: return "CloseObstacle";
  }
  return "unknown";
}

struct ModeState {
  ProximityMode mode{ProximityMode::safe};
  bool reversing{false};
  /// Distance to the nearest obstacle point; infinity when there is none.
  double nearest{std::numeric_limits<double>::infinity()};
};

/// Obstacle proximity from the robot body: distance from the footprint
/// rectangle at `pose` to the nearest point (zero inside).
inline double footprint_distance(const Pose2& pose, const Footprint& footprint, Vec2 world) {
  const Vec2 q = pose.to_local(world);
  const double dx = std::max(0.0, std::abs(q.x) - footprint.half_length());
  const double dy = std::max(0.0, std::abs(q.y) - footprint.half_width());
  return std::hypot(dx, dy);
}

/// Mode for nearest distance `d` and reference heading error. With a
/// previous mode and positive hysteresis, leaving a closer mode requires
/// clearing its threshold by the band.
inline ModeState classify_mode(double d, double heading_error, const MpcParams& p,
                               std::optional<ProximityMode> previous = std::nullopt) {
  ModeState s;
  s.nearest = d;
  if (d < p.close_distance) {
    s.mode = ProximityMode::close_obstacle;
  } else if (d < p.safe_distance) {
    s.mode = ProximityMode::obstacle_present;
  } else {
    s.mode = ProximityMode::safe;
  }
  if (previous && p.hysteresis > 0.0) {
    if (*previous == ProximityMode::close_obstacle && s.mode != ProximityMode::close_obstacle &&
        d < p.close_distance + p.hysteresis) {
      s.mode = ProximityMode::close_obstacle;
    } else if (*previous == ProximityMode::obstacle_present && s.mode == ProximityMode::safe &&
               d < p.safe_distance + p.hysteresis) {
      s.mode = ProximityMode::obstacle_present;
    }
  }
  s.reversing = s.mode == ProximityMode::close_obstacle && std::abs(wrap_angle(heading_error)) > kPi / 2;
  return s;
}

/// Nearest-point overload: distance measured from the footprint at `pose`.
/// While the reference lies ahead, points behind the rear edge are ignored.
inline ModeState classify_mode(std::span<const Vec2> points, const Pose2& pose,
                               const Footprint& footprint, double ref_heading, const MpcParams& p,
                               std::optional<ProximityMode> previous = std::nullopt) {
  const double heading_error = ref_heading - pose.theta;
  const bool ahead = std::abs(wrap_angle(heading_error)) <= kPi / 2;
  double d = std::numeric_limits<double>::infinity();
  for (const auto& q : points) {
    if (ahead && pose.to_local(q).x < -footprint.half_length()) continue;
    d = std::min(d, footprint_distance(pose, footprint, q));
  }
  return classify_mode(d, heading_error, p, previous);
}

/// Every `stride`-th in-range beam endpoint plus remembered map cells in the
/// rear blind sector within circumradius + `blind_extra`, in world frame.
inline std::vector<Vec2> extract_obstacles(const LidarScan& scan, const Pose2& pose,
                                           const OccupancyGrid& costmap,
                                           const Footprint& footprint, int stride = 15,
                                           double blind_extra = 0.3,
                                           double field_of_view = 1.5 * kPi) {
  std::vector<Vec2> pts;
  for (std::size_t i = 0; i < scan.size(); i += static_cast<std::size_t>(stride)) {
    if (scan.in_range(i)) pts.push_back(pose.to_world(scan.point(i)));
  }
  auto blind = blind_spot_cells(costmap, pose, footprint.circumradius() + blind_extra, field_of_view);
  pts.insert(pts.end(), blind.begin(), blind.end());
  return pts;
}

/// Reference positions for states 0..N-1 plus the heading to hold at the end.
struct MpcReference {
  std::vector<Vec2> points;
  double heading{0.0};
};

/// Samples the path ahead of `pose` with a speed profile that ramps from
/// `current_speed` toward `v_ref` at the body acceleration limit.
inline MpcReference make_reference(const GlobalPath& path, const Pose2& pose, double current_speed,
                                   double v_ref, const MpcParams& p) {
  MpcReference ref;
  const double s0 = path.project(pose.position());
  double s = s0;
  double speed = std::abs(current_speed);
  ref.points.reserve(static_cast<std::size_t>(p.horizon));
  ref.points.push_back(path.point_at(s0));
  for (int k = 1; k < p.horizon; ++k) {
    speed = std::min(v_ref, speed + p.max_wheel_accel * p.dt);
    s += speed * p.dt;
    ref.points.push_back(path.point_at(s));
  }
  ref.heading = path.heading_at(std::min(s, path.length()));
  return ref;
}

/// Optimisation variables: wheel speeds (vr_k, vl_k) for k = 0..N-2 stored
/// flat as [vr_0, vl_0, vr_1, vl_1, ...].
struct MpcProblem {
  Pose2 start;
  double vr0{0.0};
  double vl0{0.0};
  MpcReference reference;
  std::vector<Vec2> obstacles;
  double v_ref{1.8};
  double w_obs{50.0};
  /// Weight of the terminal heading term; zero disables it.
  double w_heading{0.0};
  MpcParams params;

  int controls() const { return params.horizon - 1; }
};

struct MpcControl {
  double vr{0.0};
  double vl{0.0};
  double ar{0.0};
  double al{0.0};
};

struct MpcDecision {
  std::vector<Pose2> states;
  std::vector<MpcControl> controls;
  double objective_value{0.0};
  bool converged{false};
  int iterations{0};
  /// Objective after each accepted step, starting with the initial point.
  std::vector<double> cost_history;

  VelocityCommand first_command(double wheel_separation) const {
    if (controls.empty()) return {};
    return to_command(controls.front().vr, controls.front().vl, wheel_separation);
  }
};

/// Rolls the exact-arc model forward. Headings are left unwrapped.
inline std::vector<Pose2> rollout(const Pose2& start, std::span<const double> u, double dt,
                                  double wheel_separation) {
  const std::size_t n = u.size() / 2;
  std::vector<Pose2> s(n + 1);
  s[0] = start;
  for (std::size_t k = 0; k < n; ++k) {
    const double v = 0.5 * (u[2 * k] + u[2 * k + 1]);
    const double w = (u[2 * k] - u[2 * k + 1]) / wheel_separation;
    const double half = 0.5 * w * dt;
    const double chord = v * dt * sinc(half);
    const double phi = s[k].theta + half;
    s[k + 1] = {s[k].x + chord * std::cos(phi), s[k].y + chord * std::sin(phi), s[k].theta + w * dt};
  }
  return s;
}

/// The tracking objective with the controls given as (vr, vl, ar, al)
/// tuples: speed error, position error against `reference` (state k against
/// reference point k) and per-wheel acceleration smoothness.
inline double objective(std::span<const Pose2> states, std::span<const MpcControl> controls,
                        std::span<const Vec2> reference, double v_ref, const MpcParams& p) {
  double j = 0.0;
  for (const auto& c : controls) {
    const double e = std::abs(0.5 * (c.vr + c.vl)) - v_ref;
    j += p.w_v * e * e;
  }
  for (std::size_t k = 0; k < states.size() && k < reference.size(); ++k) {
    const double dx = states[k].x - reference[k].x;
    const double dy = states[k].y - reference[k].y;
    j += p.w_x * (dx * dx + dy * dy);
  }
  for (std::size_t k = 0; k + 1 < controls.size(); ++k) {
    const double dr = controls[k].ar - controls[k + 1].ar;
    const double dl = controls[k].al - controls[k + 1].al;
    j += p.w_a * (dr * dr + dl * dl);
  }
  return j;
}

/// Full cost of the flat control vector `u`, including obstacle and heading
/// penalties. When `grad` is given it receives dJ/du by the adjoint method.
inline double mpc_cost(const MpcProblem& prob, std::span<const double> u,
                       std::vector<double>* grad = nullptr) {
  const MpcParams& p = prob.params;
  const int m = prob.controls();
  const double dt = p.dt;
  const double L = p.wheel_separation;
  const std::vector<Pose2> s = rollout(prob.start, u, dt, L);
  const int n = m + 1;

  double j = 0.0;
  // dJ/dstate for each state (x, y, theta).
  std::vector<std::array<double, 3>> ds(static_cast<std::size_t>(n), {0.0, 0.0, 0.0});
  std::vector<double> du(u.size(), 0.0);

  for (int k = 0; k < m; ++k) {
    const double v = 0.5 * (u[2 * k] + u[2 * k + 1]);
    const double e = std::abs(v) - prob.v_ref;
    j += p.w_v * e * e;
    const double g = 2.0 * p.w_v * e * (v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0)) * 0.5;
    du[2 * k] += g;
    du[2 * k + 1] += g;
  }

  // Wheel accelerations a_k = (u_k - u_{k-1}) / dt, u_{-1} the current speeds.
  for (int wheel = 0; wheel < 2; ++wheel) {
    const double prev0 = wheel == 0 ? prob.vr0 : prob.vl0;
    std::vector<double> a(static_cast<std::size_t>(m));
    for (int k = 0; k < m; ++k) {
      const double prev = k == 0 ? prev0 : u[2 * (k - 1) + wheel];
      a[k] = (u[2 * k + wheel] - prev) / dt;
    }
    std::vector<double> da(static_cast<std::size_t>(m), 0.0);
    for (int k = 0; k + 1 < m; ++k) {
      const double d = a[k] - a[k + 1];
      j += p.w_a * d * d;
      da[k] += 2.0 * p.w_a * d;
      da[k + 1] -= 2.0 * p.w_a * d;
    }
    for (int k = 0; k < m; ++k) {
      du[2 * k + wheel] += da[k] / dt;
      if (k > 0) du[2 * (k - 1) + wheel] -= da[k] / dt;
    }
  }

  const auto& ref = prob.reference.points;
  const double dobs2 = p.d_obs * p.d_obs;
  for (int k = 0; k < n; ++k) {
    if (static_cast<std::size_t>(k) < ref.size()) {
      const double dx = s[k].x - ref[k].x;
      const double dy = s[k].y - ref[k].y;
      j += p.w_x * (dx * dx + dy * dy);
      ds[k][0] += 2.0 * p.w_x * dx;
      ds[k][1] += 2.0 * p.w_x * dy;
    }
    if (k == 0 || prob.w_obs == 0.0) continue;
    for (const auto& q : prob.obstacles) {
      const double dx = s[k].x - q.x;
      const double dy = s[k].y - q.y;
      const double d2 = dx * dx + dy * dy;
      if (d2 >= dobs2) continue;
      const double d = std::sqrt(d2);
      const double pen = p.d_obs - d;
      j += prob.w_obs * pen * pen;
      if (d > 1e-12) {
        const double g = -2.0 * prob.w_obs * pen / d;
        ds[k][0] += g * dx;
        ds[k][1] += g * dy;
      }
    }
  }
  if (prob.w_heading > 0.0) {
    const double e = s[n - 1].theta - prob.reference.heading;
    j += prob.w_heading * (1.0 - std::cos(e));
    ds[n - 1][2] += prob.w_heading * std::sin(e);
  }
  if (grad == nullptr) return j;

  // Adjoint sweep.
  std::array<double, 3> lam = ds[n - 1];
  for (int k = m - 1; k >= 0; --k) {
    const double vr = u[2 * k];
    const double vl = u[2 * k + 1];
    const double v = 0.5 * (vr + vl);
    const double w = (vr - vl) / L;
    const double half = 0.5 * w * dt;
    const double sc = sinc(half);
    const double chord = v * dt * sc;
    const double phi = s[k].theta + half;
    const double c = std::cos(phi);
    const double sn = std::sin(phi);
    const double dchord_dv = dt * sc;
    const double dchord_dw = v * dt * sinc_derivative(half) * 0.5 * dt;
    const double dx_dv = dchord_dv * c;
    const double dy_dv = dchord_dv * sn;
    const double dx_dw = dchord_dw * c - chord * sn * 0.5 * dt;
    const double dy_dw = dchord_dw * sn + chord * c * 0.5 * dt;
    const double dth_dw = dt;
    const double gv = lam[0] * dx_dv + lam[1] * dy_dv;
    const double gw = lam[0] * dx_dw + lam[1] * dy_dw + lam[2] * dth_dw;
    du[2 * k] += 0.5 * gv + gw / L;
    du[2 * k + 1] += 0.5 * gv - gw / L;
    const std::array<double, 3> next = {
        ds[k][0] + lam[0], ds[k][1] + lam[1],
        ds[k][2] + lam[2] + lam[0] * (-chord * sn) + lam[1] * (chord * c)};
    lam = next;
  }
  *grad = std::move(du);
  return j;
}

/// Makes `u` satisfy the wheel speed and acceleration bounds by clamping
/// each step in sequence against the previous one.
inline void project_controls(std::vector<double>& u, double vr0, double vl0, const MpcParams& p) {
  const double dv = p.max_wheel_accel * p.dt;
  double prev[2] = {vr0, vl0};
  for (std::size_t k = 0; k < u.size() / 2; ++k) {
    for (int wheel = 0; wheel < 2; ++wheel) {
      const double lo = std::max(-p.max_wheel_speed, prev[wheel] - dv);
      const double hi = std::min(p.max_wheel_speed, prev[wheel] + dv);
      double& x = u[2 * k + static_cast<std::size_t>(wheel)];
      x = std::max(lo, std::min(hi, x));
      prev[wheel] = x;
    }
  }
}

/// Builds the decision record (wrapped headings, acceleration pairs) for `u`.
inline MpcDecision make_decision(const MpcProblem& prob, std::span<const double> u) {
  MpcDecision d;
  d.states = rollout(prob.start, u, prob.params.dt, prob.params.wheel_separation);
  for (auto& s : d.states) s.theta = wrap_angle(s.theta);
  double pr = prob.vr0, pl = prob.vl0;
  for (std::size_t k = 0; k < u.size() / 2; ++k) {
    const double vr = u[2 * k], vl = u[2 * k + 1];
    d.controls.push_back({vr, vl, (vr - pr) / prob.params.dt, (vl - pl) / prob.params.dt});
    pr = vr;
    pl = vl;
  }
  return d;
}

/// Constant-curvature ramp toward `speed` (negative for reverse) used when
/// no previous solution exists.
inline std::vector<double> ramp_controls(const MpcProblem& prob, double speed) {
  std::vector<double> u(static_cast<std::size_t>(2 * prob.controls()));
  for (int k = 0; k < prob.controls(); ++k) {
    u[2 * k] = speed;
    u[2 * k + 1] = speed;
  }
  project_controls(u, prob.vr0, prob.vl0, prob.params);
  return u;
}

/// Projected gradient descent with Barzilai-Borwein trial steps and
/// Armijo backtracking; only decreasing steps are accepted.
inline MpcDecision solve(const MpcProblem& prob, std::vector<double> u) {
  const MpcParams& p = prob.params;
  if (u.size() != static_cast<std::size_t>(2 * prob.controls())) u = ramp_controls(prob, prob.v_ref);
  project_controls(u, prob.vr0, prob.vl0, p);
  std::vector<double> g;
  double j = mpc_cost(prob, u, &g);
  if (!std::isfinite(j)) throw Error("non-finite MPC objective");
  for (double x : g) {
    if (!std::isfinite(x)) throw Error("non-finite MPC gradient");
  }

  std::vector<double> history{j};
  bool converged = false;
  double alpha = 1e-2;
  int it = 0;
  std::vector<double> trial(u.size()), g_new;
  for (; it < p.max_iterations; ++it) {
    bool accepted = false;
    double j_new = j, step2 = 0.0;
    for (int bt = 0; bt < 40; ++bt) {
      for (std::size_t i = 0; i < u.size(); ++i) trial[i] = u[i] - alpha * g[i];
      project_controls(trial, prob.vr0, prob.vl0, p);
      step2 = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) step2 += (trial[i] - u[i]) * (trial[i] - u[i]);
      if (step2 == 0.0) break;
      j_new = mpc_cost(prob, trial);
      if (std::isfinite(j_new) && j_new <= j - 1e-4 / alpha * step2 && j_new < j) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      converged = true;
      break;
    }
    j_new = mpc_cost(prob, trial, &g_new);
    double sy = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      const double si = trial[i] - u[i];
      sy += si * (g_new[i] - g[i]);
      ss += si * si;
    }
    u.swap(trial);
    g.swap(g_new);
    const double improvement = j - j_new;
    j = j_new;
    history.push_back(j);
    alpha = sy > 1e-15 ? std::clamp(ss / sy, 1e-6, 10.0) : std::min(10.0, alpha * 2.0);
    if (std::sqrt(ss) < p.tolerance || improvement < 1e-12 * std::max(1.0, j)) {
      converged = true;
      ++it;
      break;
    }
  }
  MpcDecision d = make_decision(prob, u);
  d.objective_value = j;
  d.converged = converged;
  d.iterations = it;
  d.cost_history = std::move(history);
  return d;
}

/// Global-path-following planner built on the optimiser above.
class MpcPlanner final : public Planner {
 public:
  MpcPlanner(MpcParams params, GlobalPlannerParams global, RobotParams robot)
      : params_(params), session_(global), robot_(robot) {
    params_.validate();
  }

  void reset(const EnvironmentSpec& env) override {
    session_.reset(env.grid, env.goal);
    warm_.clear();
    previous_mode_.reset();
    was_reversing_ = false;
  }

  PlannerOutput plan(const PlannerInput& in) override {
    PlannerOutput out;
    const Pose2 pose = in.state.pose();
    const double speed = in.state.v();
    if (!session_.update(in.time, pose, speed, &in.scan)) {
      out.mode = "no_path";
      warm_.clear();
      return out;
    }
    const GlobalPath& path = session_.path();
    const std::vector<Vec2> obstacles =
        extract_obstacles(in.scan, pose, in.map, robot_.footprint, params_.lidar_stride,
                          params_.blind_spot_extra);

    const double s = path.project(pose.position());
    const Vec2 ahead = path.point_at(s + session_.params().lookahead);
    const double ref_heading = (ahead - pose.position()).norm() > 0.05
                                   ? (ahead - pose.position()).angle()
                                   : path.heading_at(s);
    const ModeState mode = classify_mode(obstacles, pose, robot_.footprint, ref_heading, params_,
                                         previous_mode_);
    previous_mode_ = mode.mode;

    MpcProblem prob;
    prob.params = params_;
    prob.start = pose;
    prob.vr0 = in.state.vr;
    prob.vl0 = in.state.vl;
    prob.obstacles = obstacles;
    prob.w_obs = params_.w_obs;
    switch (mode.mode) {
      case ProximityMode::safe: prob.v_ref = params_.v_ref_safe; break;
      case ProximityMode::obstacle_present:
        prob.v_ref = params_.v_ref_obstacle;
        prob.w_heading = params_.w_heading;
        break;
      case ProximityMode::close_obstacle:
        prob.v_ref = params_.v_ref_close;
        prob.w_obs = params_.w_obs * params_.close_obs_factor;
        break;
    }
    prob.reference = make_reference(path, pose, speed, prob.v_ref, params_);

    std::vector<double> warm;
    if (mode.reversing && !was_reversing_) {
      warm = ramp_controls(prob, -prob.v_ref);
    } else if (warm_.size() == static_cast<std::size_t>(2 * prob.controls())) {
      warm.assign(warm_.begin() + 2, warm_.end());
      warm.push_back(warm_[warm_.size() - 2]);
      warm.push_back(warm_.back());
    } else {
      warm = ramp_controls(prob, prob.v_ref);
    }
    was_reversing_ = mode.reversing;

    MpcDecision d;
    try {
      d = solve(prob, std::move(warm));
    } catch (const Error& e) {
      warm_.clear();
      out.mode = std::string("solve_failed:") + e.what();
      return out;
    }
    warm_.clear();
    for (const auto& c : d.controls) {
      warm_.push_back(c.vr);
      warm_.push_back(c.vl);
    }
    out.cmd = d.first_command(params_.wheel_separation);
    out.mode = to_string(mode.mode);
    out.reversing = mode.reversing;
    if (std::isfinite(mode.nearest)) out.nearest_obstacle = mode.nearest;
    last_ = std::move(d);
    return out;
  }

  const MpcDecision& last_decision() const { return last_; }
  const NavigationSession& session() const { return session_; }

 private:
  MpcParams params_;
  NavigationSession session_;
  RobotParams robot_;
  std::vector<double> warm_;
  std::optional<ProximityMode> previous_mode_;
  bool was_reversing_{false};
  MpcDecision last_;
};

}  // namespace barn
