#pragma once

// Scan-based action certification: the region the footprint sweeps while
// executing a command for a short horizon is built as a polygon, any scan
// point inside it vetoes the command, and a fixed recovery ladder looks for
// a slower or different motion that certifies.

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "barn/geometry.hpp"
#include "barn/perception.hpp"
#include "barn/simulator.hpp"

namespace barn {

struct SafetyParams {
  double margin{0.05};
  double horizon{0.5};
  /// Maximum angle subtended by one arc segment of a zone boundary.
  double arc_step{5.0 * kPi / 180.0};
  double backup_speed{0.3};
  double rotate_speed{1.0};
  /// Rear blind-spot recall radius beyond the footprint circumradius.
  double blind_spot_extra{0.3};
};

enum class ZoneKind { stationary, linear, radial, rotation };

struct SafetyZone {
  ZoneKind kind{ZoneKind::stationary};
  /// Simple polygon in the robot frame, counter-clockwise.
  Polygon polygon;
  double horizon{0.0};

  bool contains(Vec2 p) const { return point_in_polygon(p, polygon); }
  double bounding_radius() const {
    double r = 0.0;
    for (const auto& v : polygon) r = std::max(r, v.norm());
    return r;
  }
};

enum class Recovery { none, slow_down, rotate_in_place, back_up };

inline const char* to_string(Recovery r) {
  switch (r) {
    case Recovery::none: return "none";
    case Recovery::slow_down: return "slow_down";
    case Recovery::rotate_in_place: return "rotate_in_place";
    case Recovery::back_up: return "back_up";
  }
  return "unknown";
}

struct SafetyVerdict {
  bool safe{true};
  /// Indices (ScanPoint::index) of the points inside the zone.
  std::vector<int> offending_points;
  Recovery suggested_recovery{Recovery::none};
};

namespace detail {

/// Polygon circumscribing a circle (every edge tangent to it).
inline Polygon circumscribed_circle(Vec2 center, double radius, double max_step) {
  const int n = std::max(8, static_cast<int>(std::ceil(kTwoPi / max_step)));
  const double r = radius / std::cos(kPi / n);
  Polygon poly;
  poly.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) poly.push_back(center + unit((i + 0.5) * kTwoPi / n) * r);
  return poly;
}

inline Vec2 rotate_about(Vec2 p, Vec2 center, double angle) {
  return center + rotate(p - center, angle);
}

}  // namespace detail

/// Region swept by the footprint (inflated by `margin`) while executing
/// `cmd` for `horizon` seconds.
///
/// Straight motion gives a rectangle stretched along x. Turning motion is
/// bounded by the start footprint, the end footprint, the arc of the
/// outermost corners about the turn centre (edges tangent to it, so the
/// chords never cut inside) and the arc of the innermost footprint point.
/// Pure rotation gives the circumscribed disc; a zero command the inflated
/// footprint.
inline SafetyZone build_zone(const VelocityCommand& cmd, double horizon,
                             const Footprint& footprint, double margin,
                             double arc_step = 5.0 * kPi / 180.0) {
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
  SafetyZone zone;
  zone.horizon = horizon;
  const Footprint infl = footprint.inflated(margin);
  const double a = infl.half_length();
  const double b = infl.half_width();

  if (cmd.v == 0.0 && cmd.omega == 0.0) {
    zone.kind = ZoneKind::stationary;
    const auto c = infl.corners();
    zone.polygon.assign(c.begin(), c.end());
    return zone;
  }
  if (cmd.v == 0.0) {
    zone.kind = ZoneKind::rotation;
    zone.polygon =
        detail::circumscribed_circle({0.0, 0.0}, footprint.circumradius() + margin, arc_step);
    return zone;
  }
  if (cmd.omega == 0.0) {
    zone.kind = ZoneKind::linear;
    const double reach = std::abs(cmd.v) * horizon;
    const double front = cmd.v > 0 ? a + reach : a;
    const double back = cmd.v > 0 ? -a : -a - reach;
    zone.polygon = {{front, -b}, {front, b}, {back, b}, {back, -b}};
    return zone;
  }

  // Canonical frame: forward motion turning left, turn centre at (0, R).
  zone.kind = ZoneKind::radial;
  const double sx = cmd.v > 0 ? 1.0 : -1.0;
  const double sy = (cmd.v > 0) == (cmd.omega > 0) ? 1.0 : -1.0;
  const double R = std::abs(cmd.v / cmd.omega);
  const double phi = std::abs(cmd.omega) * horizon;
  const Vec2 icc{0.0, R};
  const double r_out = std::hypot(a, R + b);

  Polygon canon;
  const double extent = R > b ? 2.0 * std::atan(a / (R - b)) : kTwoPi;
  if (R <= b || phi + extent >= kTwoPi) {
    canon = detail::circumscribed_circle(icc, r_out, arc_step);
  } else {
    auto angle_of = [&](Vec2 p) { return (p - icc).angle(); };
    const Vec2 rear_out{-a, -b};
    const Vec2 front_out{a, -b};
    const Vec2 front_in{a, b};
    const Vec2 mid_in{0.0, b};
    const Vec2 rear_in{-a, b};

    canon.push_back(rear_out);
    const double a0 = angle_of(rear_out);
    const double span = (angle_of(front_out) + phi) - a0;
    const int n_out = std::max(1, static_cast<int>(std::ceil(span / arc_step)));
    const double d_out = span / n_out;
    const double r_tangent = r_out / std::cos(0.5 * d_out);
    for (int i = 0; i < n_out; ++i) {
      canon.push_back(icc + unit(a0 + (i + 0.5) * d_out) * r_tangent);
    }
    canon.push_back(detail::rotate_about(front_out, icc, phi));
    canon.push_back(detail::rotate_about(front_in, icc, phi));
    const int n_in = std::max(1, static_cast<int>(std::ceil(phi / arc_step)));
    for (int i = 0; i <= n_in; ++i) {
      canon.push_back(detail::rotate_about(mid_in, icc, phi * (n_in - i) / n_in));
    }
    canon.push_back(rear_in);
  }
  zone.polygon.reserve(canon.size());
  for (const auto& p : canon) zone.polygon.push_back({sx * p.x, sy * p.y});
  make_ccw(zone.polygon);
  return zone;
}

/// Checks every point of `points` that falls inside the zone's range and
/// bearing window for containment.
inline SafetyVerdict certify(const VelocityCommand& cmd, const PointSet& points, double horizon,
                             const Footprint& footprint, double margin,
                             double arc_step = 5.0 * kPi / 180.0) {
  const SafetyZone zone = build_zone(cmd, horizon, footprint, margin, arc_step);
  SafetyVerdict verdict;
  SensorWindow window;
  window.r_hi = zone.bounding_radius() + 1e-9;
  if (zone.contains({0.0, 0.0})) {
    window.bearings[0] = {-kPi, kPi};
    window.bearing_count = 1;
  } else {
    const double r_hi = window.r_hi;
    window = sensor_window(zone.polygon);
    window.r_lo = 0.0;
    window.r_hi = r_hi;
  }
  visit_candidates(points, window, [&](const ScanPoint& sp) {
    if (zone.contains(sp.p)) verdict.offending_points.push_back(sp.index);
    return false;
  });
  verdict.safe = verdict.offending_points.empty();
  if (!verdict.safe) {
    verdict.suggested_recovery = cmd.v != 0.0 ? Recovery::slow_down : Recovery::back_up;
  }
  return verdict;
}

inline SafetyVerdict certify(const VelocityCommand& cmd, const PointSet& points,
                             const Footprint& footprint, const SafetyParams& params) {
  return certify(cmd, points, params.horizon, footprint, params.margin, params.arc_step);
}

inline SafetyVerdict certify(const VelocityCommand& cmd, const LidarScan& scan,
                             const Footprint& footprint, const SafetyParams& params) {
  return certify(cmd, PointSet::from_scan(scan), footprint, params);
}

/// Wheel speeds and limits needed to predict how the robot brakes.
struct MotionContext {
  double vl{0.0};
  double vr{0.0};
  RobotParams robot;
};

/// Robot-frame poses passed while executing `cmd` for one control period
/// and then braking to rest under the wheel acceleration limit.
inline std::vector<Pose2> braking_trajectory(const VelocityCommand& cmd, const MotionContext& m) {
  RobotState s{0.0, 0.0, 0.0, m.vl, m.vr};
  std::vector<Pose2> poses{s.pose()};
  const double dt = m.robot.sim_substep;
  const int react = std::max(1, static_cast<int>(std::lround(m.robot.control_period / dt)));
  for (int k = 0; k < react; ++k) {
    s = step(s, cmd, dt, m.robot).state;
    poses.push_back(s.pose());
  }
  for (int k = 0; k < 10000 && (s.vl != 0.0 || s.vr != 0.0); ++k) {
    s = step(s, {0.0, 0.0}, dt, m.robot).state;
    poses.push_back(s.pose());
  }
  return poses;
}

/// Certification of a command issued while the robot is still moving: the
/// command's zone must be clear, and so must the footprint (inflated by the
/// margin) along the path the robot takes if it stops right after it.
inline SafetyVerdict certify_in_motion(const VelocityCommand& cmd, const PointSet& points,
                                       const Footprint& footprint, const SafetyParams& params,
                                       const MotionContext& motion) {
  SafetyVerdict verdict = certify(cmd, points, footprint, params);
  if (!verdict.safe) return verdict;
  const std::vector<Pose2> path = braking_trajectory(cmd, motion);
  double reach = 0.0;
  for (const auto& p : path) reach = std::max(reach, p.position().norm());
  const Footprint body = footprint.inflated(params.margin);
  const double r_hi = reach + body.circumradius();
  for (const auto& sp : points.points()) {
    if (sp.range > r_hi) continue;
    for (const auto& p : path) {
      const Vec2 q = p.to_local(sp.p);
      if (std::abs(q.x) <= body.half_length() && std::abs(q.y) <= body.half_width()) {
        verdict.offending_points.push_back(sp.index);
        break;
      }
    }
  }
  verdict.safe = verdict.offending_points.empty();
  if (!verdict.safe) verdict.suggested_recovery = Recovery::slow_down;
  return verdict;
}

struct RecoveryResult {
  VelocityCommand cmd;
  Recovery action{Recovery::none};
};

/// Sign of the side (left +1, right -1) whose beams see farther on average.
inline double freer_side(const LidarScan& scan) {
  double left = 0.0, right = 0.0;
  int nl = 0, nr = 0;
  for (std::size_t i = 0; i < scan.size(); ++i) {
    if (scan.angles[i] > 0.0) {
      left += scan.ranges[i];
      ++nl;
    } else if (scan.angles[i] < 0.0) {
      right += scan.ranges[i];
      ++nr;
    }
  }
  const double ml = nl > 0 ? left / nl : 0.0;
  const double mr = nr > 0 ? right / nr : 0.0;
  return ml >= mr ? 1.0 : -1.0;
}

/// Largest inflation of the footprint rectangle that still holds no point;
/// negative when a point lies inside the body.
inline double stationary_clearance(const PointSet& points, const Footprint& footprint) {
  double c = std::numeric_limits<double>::infinity();
  for (const auto& sp : points.points()) {
    c = std::min(c, std::max(std::abs(sp.p.x) - footprint.half_length(),
                             std::abs(sp.p.y) - footprint.half_width()));
  }
  return c;
}

/// Recovery ladder for a vetoed command: same curvature at half then
/// quarter speed, rotation in place toward the freer side, straight back-up.
/// When a point already sits inside the margin band no motion can certify,
/// so rotation and back-up are retried with the margin shrunk to half the
/// remaining clearance. Returns the first rung that certifies, else zero.
inline RecoveryResult recover(const LidarScan& scan, const PointSet& points,
                              const VelocityCommand& blocked, const Footprint& footprint,
                              const SafetyParams& params, const MotionContext* motion = nullptr) {
  auto check = [&](const VelocityCommand& c, const SafetyParams& p) {
    return motion != nullptr ? certify_in_motion(c, points, footprint, p, *motion).safe
                             : certify(c, points, footprint, p).safe;
  };
  auto ok = [&](const VelocityCommand& c) { return check(c, params); };
  if (blocked.v != 0.0) {
    for (double scale : {0.5, 0.25}) {
      const VelocityCommand c{blocked.v * scale, blocked.omega * scale};
      if (ok(c)) return {c, Recovery::slow_down};
    }
  }
  const VelocityCommand spin{0.0, freer_side(scan) * params.rotate_speed};
  if (ok(spin)) return {spin, Recovery::rotate_in_place};
  const VelocityCommand back{-params.backup_speed, 0.0};
  if (ok(back)) return {back, Recovery::back_up};
  const double clearance = stationary_clearance(points, footprint);
  if (clearance > 0.0 && clearance < params.margin) {
    SafetyParams tight = params;
    tight.margin = 0.5 * clearance;
    auto tight_ok = [&](const VelocityCommand& c) {
      return check(c, tight);
    };
    if (tight_ok(spin)) return {spin, Recovery::rotate_in_place};
    const VelocityCommand other{0.0, -spin.omega};
    if (tight_ok(other)) return {other, Recovery::rotate_in_place};
    if (tight_ok(back)) return {back, Recovery::back_up};
  }
  return {{0.0, 0.0}, Recovery::none};
}

/// Scan points plus the exposed faces of remembered map cells in the rear
/// blind sector, all in the robot frame.
inline PointSet perceived_points(const PlannerInput& in, const Footprint& footprint,
                                 double blind_spot_extra, double field_of_view = 1.5 * kPi) {
  PointSet points = PointSet::from_scan(in.scan);
  const Pose2 pose = in.state.pose();
  const std::vector<Vec2> cells =
      blind_spot_cells(in.map, pose, footprint.circumradius() + blind_spot_extra, field_of_view);
  std::vector<Vec2> blind = exposed_faces(in.map, cells);
  for (auto& p : blind) p = pose.to_local(p);
  if (!blind.empty()) points.add(blind);
  return points;
}

/// Wraps a planner and replaces any command that fails certification with
/// the recovery ladder's answer.
class SafetyFilter final : public Planner {
 public:
  SafetyFilter(std::unique_ptr<Planner> inner, SafetyParams params, RobotParams robot)
      : inner_(std::move(inner)), params_(params), robot_(robot) {}

  void reset(const EnvironmentSpec& env) override { inner_->reset(env); }

  PlannerOutput plan(const PlannerInput& in) override {
    PlannerOutput out = inner_->plan(in);
    const PointSet points = perceived_points(in, robot_.footprint, params_.blind_spot_extra);
    const VelocityCommand cmd = clamp_to_feasible(out.cmd, robot_);
    const MotionContext motion{in.state.vl, in.state.vr, robot_};
    if (certify_in_motion(cmd, points, robot_.footprint, params_, motion).safe) return out;
    const RecoveryResult r = recover(in.scan, points, cmd, robot_.footprint, params_, &motion);
    out.cmd = r.cmd;
    out.mode += out.mode.empty() ? "" : "+";
    out.mode += std::string("safety:") + to_string(r.action);
    ++interventions_;
    return out;
  }

  long interventions() const { return interventions_; }

 private:
  std::unique_ptr<Planner> inner_;
  SafetyParams params_;
  RobotParams robot_;
  long interventions_{0};
};

}  // namespace barn
