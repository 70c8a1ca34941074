#pragma once

// Curvature-sampled arc planner. Each candidate arc's swept footprint is
// covered by convex rectangles and triangles, each tested only against the
// scan points inside its range/bearing window. When no forward arc is free,
// reverse arcs are ranked by how many forward arcs they would unlock.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "barn/geometry.hpp"
#include "barn/global_planner.hpp"
#include "barn/perception.hpp"
#include "barn/safety_layer.hpp"
#include "barn/simulator.hpp"

namespace barn {

enum class ShapeKind { rectangle, triangle };

struct ArcShape {
  ShapeKind kind{ShapeKind::rectangle};
  /// Convex, counter-clockwise, robot frame.
  Polygon polygon;
  /// Arc length along the centre path where this shape's coverage starts.
  double s_lo{0.0};
  /// Distance from the sensor origin to the shape (zero if it contains it).
  double min_range{0.0};
  SensorWindow window;
};

struct ArcSample {
  double curvature{0.0};
  double speed{0.0};
  double duration{0.0};
  /// Ordered by increasing distance from the robot.
  std::vector<ArcShape> shapes;

  double length() const { return std::abs(speed) * duration; }
  VelocityCommand command() const { return {speed, curvature * speed}; }
  Pose2 end_pose() const { return integrate_arc({}, speed, curvature * speed, duration); }
};

struct FeasibilityResult {
  bool feasible{true};
  std::optional<int> first_blocked_shape;
  double clear_length{0.0};
};

namespace detail {

inline void add_shape(std::vector<ArcShape>& out, ShapeKind kind, Polygon poly, double s_lo) {
  make_ccw(poly);
  ArcShape s;
  s.kind = kind;
  s.s_lo = s_lo;
  s.window = sensor_window(poly);
  s.min_range = s.window.bearing_count == 1 && s.window.bearings[0][0] <= -kPi &&
                        s.window.bearings[0][1] >= kPi
                    ? 0.0
                    : s.window.r_lo;
  s.polygon = std::move(poly);
  out.push_back(std::move(s));
}

}  // namespace detail

/// Convex cover of the region swept by `footprint` driving `duration`
/// seconds at speed `v` along curvature `curvature`.
///
/// Straight arcs get one rectangle. Curved arcs (worked in a frame where
/// the motion is forward and turns left, then mirrored) are split into a
/// rear cap, annular slices of at most `max_segment` centre-arc length and
/// a front cap. The rear cap is the rear half of the start footprint plus a
/// triangle bounded by the tangent at the outer rear corner, which catches
/// that corner swinging outward. Each slice is the trapezoid between its
/// bounding rays, the inner radius and the outer radius; it is stored as a
/// tangent-aligned rectangle plus the two outer wedge triangles.
inline ArcSample build_arc_shapes(double curvature, double v, double duration,
                                  const Footprint& footprint, double max_segment = 0.2) {
  if (!(std::abs(v) * duration > 0.0)) throw std::invalid_argument("arc length must be positive");
  ArcSample arc;
  arc.curvature = curvature;
  arc.speed = v;
  arc.duration = duration;
  const double a = footprint.half_length();
  const double b = footprint.half_width();
  const double len = std::abs(v) * duration;
  const double sx = v > 0 ? 1.0 : -1.0;
  std::vector<ArcShape> shapes;

  if (curvature == 0.0) {
    Polygon rect{{-a, -b}, {len + a, -b}, {len + a, b}, {-a, b}};
    for (auto& p : rect) p.x *= sx;
    detail::add_shape(shapes, ShapeKind::rectangle, std::move(rect), 0.0);
  } else {
    // The turn centre sits at (0, 1/k) whichever way the robot drives.
    const double sy = curvature > 0 ? 1.0 : -1.0;
    const double R = 1.0 / std::abs(curvature);
    const double phi = len / R;
    const Vec2 icc{0.0, R};
    const double r_out = std::hypot(a, R + b);
    std::vector<std::pair<ShapeKind, Polygon>> canon;
    std::vector<double> s_lo;
    auto push = [&](ShapeKind k, Polygon p, double s) {
      canon.emplace_back(k, std::move(p));
      s_lo.push_back(s);
    };

    const double extent = R > b ? 2.0 * std::atan(a / (R - b)) : kTwoPi;
    if (R <= b || phi + extent >= kTwoPi) {
      // Turn centre inside the footprint band or a full loop: fan of
      // triangles over a polygon circumscribing the outer circle.
      const int n = 36;
      const double r = r_out / std::cos(kPi / n);
      for (int i = 0; i < n; ++i) {
        push(ShapeKind::triangle,
             {icc, icc + unit(i * kTwoPi / n) * r, icc + unit((i + 1) * kTwoPi / n) * r}, 0.0);
      }
    } else {
      const double r_in = R - b;
      const double tip = -b - a * a / (R + b);
      push(ShapeKind::rectangle, {{-a, -b}, {0.0, -b}, {0.0, b}, {-a, b}}, 0.0);
      push(ShapeKind::triangle, {{-a, -b}, {0.0, tip}, {0.0, -b}}, 0.0);

      const int slices = std::max(1, static_cast<int>(std::ceil(len / max_segment - 1e-9)));
      const double d = phi / slices;
      const double h = 0.5 * d;
      const double base = -0.5 * kPi;
      for (int i = 0; i < slices; ++i) {
        const double mid = base + (i + 0.5) * d;
        const Vec2 u = unit(mid);
        const Vec2 w{-u.y, u.x};
        const double u_lo = r_in * std::cos(h);
        const double w_half = r_in * std::sin(h);
        const double w_out = r_out * std::tan(h);
        auto at = [&](double uu, double ww) { return icc + u * uu + w * ww; };
        const double s = R * i * d;
        push(ShapeKind::rectangle,
             {at(u_lo, -w_half), at(r_out, -w_half), at(r_out, w_half), at(u_lo, w_half)}, s);
        push(ShapeKind::triangle, {at(u_lo, -w_half), at(r_out, -w_out), at(r_out, -w_half)}, s);
        push(ShapeKind::triangle, {at(u_lo, w_half), at(r_out, w_half), at(r_out, w_out)}, s);
      }

      auto moved = [&](Polygon p) {
        for (auto& q : p) q = icc + rotate(q - icc, phi);
        return p;
      };
      push(ShapeKind::rectangle, moved({{0.0, -b}, {a, -b}, {a, b}, {0.0, b}}), len);
      push(ShapeKind::triangle, moved({{0.0, -b}, {0.0, tip}, {a, -b}}), len);
    }
    for (std::size_t i = 0; i < canon.size(); ++i) {
      Polygon p = std::move(canon[i].second);
      for (auto& q : p) q = {sx * q.x, sy * q.y};
      detail::add_shape(shapes, canon[i].first, std::move(p), s_lo[i]);
    }
  }
  std::stable_sort(shapes.begin(), shapes.end(), [](const ArcShape& l, const ArcShape& r) {
    return l.min_range < r.min_range;
  });
  arc.shapes = std::move(shapes);
  return arc;
}

/// Tests the shapes in proximity order against the candidate points in each
/// shape's window; stops at the first shape holding a point.
inline FeasibilityResult check_arc(const ArcSample& arc, const PointSet& points) {
  FeasibilityResult r;
  for (std::size_t i = 0; i < arc.shapes.size(); ++i) {
    const ArcShape& shape = arc.shapes[i];
    const bool hit = visit_candidates(points, shape.window, [&](const ScanPoint& sp) {
      return point_in_convex(sp.p, shape.polygon);
    });
    if (hit) {
      r.feasible = false;
      r.first_blocked_shape = static_cast<int>(i);
      r.clear_length = shape.s_lo;
      return r;
    }
  }
  r.clear_length = arc.length();
  return r;
}

inline FeasibilityResult check_arc(const ArcSample& arc, const LidarScan& scan) {
  return check_arc(arc, PointSet::from_scan(scan));
}

struct SamplingParams {
  int curvature_samples{31};
  double max_curvature{2.5};
  /// Speed cap v_cap; forward tiers are fractions of it.
  double max_speed{2.0};
  std::vector<double> speed_fractions{1.0, 2.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0, 1.0 / 12.0};
  double duration{1.0};
  double backward_duration{0.6};
  std::vector<double> backward_speeds{0.25, 0.5, 1.0};
  /// Extra seconds of travel checked past the end of a backward arc, room
  /// to stop after the reverse manoeuvre ends.
  double backward_guard{0.3};
  /// Footprint inflation used for the swept shapes.
  double margin{0.05};
  double max_segment{0.2};
  /// Distance along the global path to the local goal; one full-speed arc
  /// length so the fastest tier can win in open space.
  double lookahead{2.0};
  /// Turn in place first when the robot is nearly stopped, the local goal
  /// lies further off the heading than this and the turning disc is clear;
  /// zero disables.
  double align_angle{kPi / 2};
  double rotate_speed{1.0};
  double blind_spot_extra{0.3};
  double wheel_separation{0.37};
  double max_wheel_speed{2.0};

  void validate() const {
    if (curvature_samples < 1) throw std::invalid_argument("curvature_samples must be positive");
    if (!(max_curvature >= 0.0)) throw std::invalid_argument("max_curvature must be nonnegative");
    if (!(max_speed > 0.0) || !(duration > 0.0) || !(backward_duration > 0.0) ||
        !(backward_guard >= 0.0)) {
      throw std::invalid_argument("sampling speeds and durations must be positive");
    }
    if (speed_fractions.empty() || backward_speeds.empty()) {
      throw std::invalid_argument("sampling speed lists must not be empty");
    }
    for (double f : speed_fractions) {
      if (!(f > 0.0)) throw std::invalid_argument("speed fractions must be positive");
    }
    for (double s : backward_speeds) {
      if (!(s > 0.0)) throw std::invalid_argument("backward speeds must be positive");
    }
  }
};

inline std::vector<double> curvature_samples(const SamplingParams& p) {
  std::vector<double> k(static_cast<std::size_t>(p.curvature_samples), 0.0);
  if (p.curvature_samples == 1) return k;
  for (int i = 0; i < p.curvature_samples; ++i) {
    k[i] = -p.max_curvature + 2.0 * p.max_curvature * i / (p.curvature_samples - 1);
  }
  // Exact zero at the centre sample keeps the straight arc a single rectangle.
  if (p.curvature_samples % 2 == 1) k[p.curvature_samples / 2] = 0.0;
  return k;
}

/// Largest speed not above `v` (in magnitude) at which curvature `k` keeps
/// both wheels within the limit.
inline double wheel_feasible_speed(double v, double k, const SamplingParams& p) {
  const double cap = p.max_wheel_speed / (1.0 + 0.5 * std::abs(k) * p.wheel_separation);
  return std::copysign(std::min(std::abs(v), cap), v);
}

/// Precomputed arc families for one parameter set.
class ArcLibrary {
 public:
  ArcLibrary() = default;
  ArcLibrary(const SamplingParams& p, const Footprint& footprint) : params_(p) {
    p.validate();
    curvatures_ = curvature_samples(p);
    const Footprint fp = footprint.inflated(p.margin);
    for (double f : p.speed_fractions) {
      std::vector<ArcSample> tier;
      for (double k : curvatures_) {
        tier.push_back(build_arc_shapes(k, wheel_feasible_speed(f * p.max_speed, k, p), p.duration,
                                        fp, p.max_segment));
      }
      forward_.push_back(std::move(tier));
    }
    for (double s : p.backward_speeds) {
      for (double k : curvatures_) {
        const double v = wheel_feasible_speed(-s, k, p);
        backward_.push_back(build_arc_shapes(k, v, p.backward_duration, fp, p.max_segment));
        guarded_.push_back(build_arc_shapes(k, v, p.backward_duration + p.backward_guard, fp,
                                            p.max_segment));
      }
    }
  }

  const SamplingParams& params() const { return params_; }
  const std::vector<double>& curvatures() const { return curvatures_; }
  /// Forward arcs per speed tier, fastest first.
  const std::vector<std::vector<ArcSample>>& forward() const { return forward_; }
  const std::vector<ArcSample>& backward() const { return backward_; }
  /// Backward arcs extended by the guard time; these decide feasibility.
  const std::vector<ArcSample>& backward_guarded() const { return guarded_; }

 private:
  SamplingParams params_;
  std::vector<double> curvatures_;
  std::vector<std::vector<ArcSample>> forward_;
  std::vector<ArcSample> backward_;
  std::vector<ArcSample> guarded_;
};

struct ForwardChoice {
  VelocityCommand cmd;
  int tier{0};
  int sample{0};
  double goal_distance{0.0};
};

/// Free arc over all speed tiers whose endpoint lies nearest the local goal
/// (robot frame); ties go to the smaller |curvature|, then the faster tier.
/// With a positive `stopping_distance` an arc is admissible only if the same
/// curvature on the fastest tier stays clear that far, so a short arc is
/// never chosen when the robot cannot brake before whatever cut it short.
inline std::optional<ForwardChoice> select_forward(const ArcLibrary& lib, const PointSet& points,
                                                   Vec2 local_goal,
                                                   double stopping_distance = 0.0) {
  std::vector<double> clear(lib.curvatures().size(), -1.0);
  auto room = [&](std::size_t i) {
    if (clear[i] < 0.0) clear[i] = check_arc(lib.forward().front()[i], points).clear_length;
    return clear[i];
  };
  std::optional<ForwardChoice> best;
  double best_k = 0.0;
  for (std::size_t t = 0; t < lib.forward().size(); ++t) {
    const auto& tier = lib.forward()[t];
    for (std::size_t i = 0; i < tier.size(); ++i) {
      const ArcSample& arc = tier[i];
      const double d = (arc.end_pose().position() - local_goal).norm();
      const double k = std::abs(arc.curvature);
      if (best && (d > best->goal_distance || (d == best->goal_distance && k >= best_k))) continue;
      if (!check_arc(arc, points).feasible) continue;
      if (arc.length() < stopping_distance && room(i) < stopping_distance) continue;
      best = ForwardChoice{arc.command(), static_cast<int>(t), static_cast<int>(i), d};
      best_k = k;
    }
  }
  return best;
}

/// Forward arcs of the slowest tier that are free when seen from `pose`.
inline int forward_options(const ArcLibrary& lib, const PointSet& points, const Pose2& pose) {
  const PointSet moved = points.transformed_to(pose);
  int count = 0;
  for (const auto& arc : lib.forward().back()) count += check_arc(arc, moved).feasible ? 1 : 0;
  return count;
}

struct BackwardChoice {
  VelocityCommand cmd;
  /// Index into ArcLibrary::backward(); negative for the rotation fallback.
  int sample{-1};
  int score{0};
};

/// Free reverse arc (guard included) whose end pose admits the most forward arcs; ties go to
/// the shorter arc, then the smaller |curvature|. With no such arc, rotates
/// toward the side with the larger mean free range.
inline BackwardChoice select_backward(const ArcLibrary& lib, const PointSet& points,
                                      const LidarScan& scan) {
  BackwardChoice best;
  double best_len = 0.0, best_k = 0.0;
  const auto& arcs = lib.backward();
  for (std::size_t i = 0; i < arcs.size(); ++i) {
    const ArcSample& arc = arcs[i];
    if (!check_arc(lib.backward_guarded()[i], points).feasible) continue;
    const int score = forward_options(lib, points, arc.end_pose());
    if (score == 0) continue;
    const double len = arc.length();
    const double k = std::abs(arc.curvature);
    const bool better = best.sample < 0 || score > best.score ||
                        (score == best.score &&
                         (len < best_len || (len == best_len && k < best_k)));
    if (better) {
      best = {arc.command(), static_cast<int>(i), score};
      best_len = len;
      best_k = k;
    }
  }
  if (best.sample >= 0) return best;
  return {{0.0, freer_side(scan) * lib.params().rotate_speed}, -1, 0};
}

/// Global-path-following planner built on arc sampling.
class SamplingPlanner final : public Planner {
 public:
  SamplingPlanner(SamplingParams params, GlobalPlannerParams global, RobotParams robot)
      : lib_(params, robot.footprint), session_(global), robot_(robot) {
    // Remembered rear cells must reach as far as any reverse manoeuvre.
    blind_extra_ = params.blind_spot_extra;
    for (const auto& arc : lib_.backward_guarded()) {
      blind_extra_ = std::max(blind_extra_, arc.length() + params.margin);
    }
  }

  void reset(const EnvironmentSpec& env) override {
    session_.reset(env.grid, env.goal);
    rotating_ = 0.0;
    backing_ = -1;
    backing_ticks_ = 0;
  }

  PlannerOutput plan(const PlannerInput& in) override {
    PlannerOutput out;
    const SamplingParams& p = lib_.params();
    const Pose2 pose = in.state.pose();
    const PointSet points = perceived_points(in, robot_.footprint, blind_extra_);

    // A reverse manoeuvre runs for its whole duration while it stays free.
    if (backing_ >= 0 && backing_ticks_ > 0) {
      const auto i = static_cast<std::size_t>(backing_);
      const ArcSample& arc = lib_.backward()[i];
      if (check_arc(lib_.backward_guarded()[i], points).feasible) {
        --backing_ticks_;
        out.cmd = arc.command();
        out.mode = "backward";
        out.reversing = true;
        return out;
      }
    }
    backing_ = -1;

    Vec2 goal = in.goal;
    if (session_.update(in.time, pose, in.state.v(), &in.scan)) goal = local_target(pose);
    goal = pose.to_local(goal);

    auto spin_free = [&](double sign) {
      const VelocityCommand spin{0.0, sign * p.rotate_speed};
      return certify(spin, points, 1.0, robot_.footprint, p.margin).safe;
    };
    const double bearing = goal.angle();
    const bool behind = std::abs(bearing) > kPi / 2;
    // Covers the slowest forward tier and the slowest reverse speed.
    const bool nearly_stopped = std::abs(in.state.v()) <= 0.3;

    const double v0 = std::max(0.0, in.state.v());
    double stop = 0.0;
    if (std::isfinite(robot_.max_wheel_accel)) {
      stop = v0 * v0 / (2.0 * robot_.max_wheel_accel) + v0 * robot_.control_period;
    }
    auto f = select_forward(lib_, points, goal, stop);
    // No forward arc at all also counts when the goal is further round than
    // the sharpest slow arc turns: spinning toward it opens new arcs, while
    // backing up just returns the robot to the same spot.
    const double slow_turn = p.max_curvature * p.max_speed * p.duration *
                             *std::min_element(p.speed_fractions.begin(), p.speed_fractions.end());
    const bool stalled =
        f ? f->goal_distance >= goal.norm() : std::abs(bearing) > slow_turn;

    // Nearly stopped and either facing away from the goal or with no arc
    // that gets closer: turn toward it in place if the turn is clear.
    if (nearly_stopped && ((p.align_angle > 0.0 && std::abs(bearing) > p.align_angle) || stalled)) {
      const double sign = bearing >= 0.0 ? 1.0 : -1.0;
      if (spin_free(sign)) {
        rotating_ = sign;
        out.cmd = {0.0, sign * p.rotate_speed};
        out.mode = "align";
        return out;
      }
    }
    // With the goal behind, an arc that ends no closer to it only digs the
    // robot further in; reversing is the better move then.
    if (f && !(behind && stalled)) {
      rotating_ = 0.0;
      out.cmd = f->cmd;
      out.mode = "forward";
      return out;
    }
    BackwardChoice b = select_backward(lib_, points, in.scan);
    if (b.sample >= 0) {
      rotating_ = 0.0;
      backing_ = b.sample;
      backing_ticks_ = static_cast<int>(std::lround(p.backward_duration / robot_.control_period)) - 1;
      out.cmd = b.cmd;
      out.mode = "backward";
      out.reversing = true;
      return out;
    }
    if (f) {
      out.cmd = f->cmd;
      out.mode = "forward";
      return out;
    }
    // Keep turning the same way once a rotation or alignment has started;
    // re-deciding every tick makes the turn flip back and forth.
    double sign = b.cmd.omega >= 0.0 ? 1.0 : -1.0;
    if (rotating_ != 0.0) sign = rotating_ > 0.0 ? 1.0 : -1.0;
    if (!spin_free(sign) && spin_free(-sign)) sign = -sign;
    if (!spin_free(sign)) {
      rotating_ = 0.0;
      out.mode = "stuck";
      return out;
    }
    rotating_ = sign;
    out.cmd = {0.0, sign * p.rotate_speed};
    out.mode = "rotate";
    return out;
  }

  const ArcLibrary& library() const { return lib_; }

 private:
  // Farthest path point within the lookahead reachable along a straight
  // line that keeps the footprint half-width (plus margin) clear on the
  // map. Aiming past a bend makes the endpoint rule cut the corner into the
  // obstacle the path goes around.
  Vec2 local_target(const Pose2& pose) const {
    const GlobalPath& path = session_.path();
    const OccupancyGrid& map = session_.costmap();
    const DistanceField& field = session_.field();
    const double clearance = robot_.footprint.half_width() + lib_.params().margin;
    const double s0 = path.project(pose.position());
    auto visible = [&](Vec2 target) {
      const Vec2 d = target - pose.position();
      const int n = static_cast<int>(std::ceil(d.norm() / (0.5 * map.resolution)));
      for (int i = 1; i <= n; ++i) {
        const CellIndex c = map.cell_of(pose.position() + d * (static_cast<double>(i) / n));
        if (!map.in_bounds(c.col, c.row) || field.at(c) < clearance) return false;
      }
      return true;
    };
    const double step = map.resolution;
    for (double ahead = lib_.params().lookahead; ahead > step; ahead -= step) {
      const Vec2 t = path.point_at(s0 + ahead);
      if (visible(t)) return t;
    }
    return path.point_at(s0 + std::min(step, lib_.params().lookahead));
  }

  ArcLibrary lib_;
  NavigationSession session_;
  RobotParams robot_;
  double rotating_{0.0};
  int backing_{-1};
  int backing_ticks_{0};
  double blind_extra_{0.0};
};

}  // namespace barn
