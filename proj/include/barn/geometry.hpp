#pragma once

// Planar geometry primitives shared by every module: vectors, poses, the
// rectangular robot footprint and polygon containment tests.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace barn {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Vec2 {
  double x{0.0};
  double y{0.0};

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator-() const { return {-x, -y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr Vec2 operator/(double s) const { return {x / s, y / s}; }
  constexpr Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr bool operator==(const Vec2&) const = default;

  constexpr double dot(Vec2 o) const { return x * o.x + y * o.y; }
  constexpr double cross(Vec2 o) const { return x * o.y - y * o.x; }
  constexpr double squared_norm() const { return x * x + y * y; }
  double norm() const { return std::hypot(x, y); }
  double angle() const { return std::atan2(y, x); }
};

constexpr Vec2 operator*(double s, Vec2 v) { return v * s; }

inline Vec2 unit(double angle) { return {std::cos(angle), std::sin(angle)}; }

inline Vec2 rotate(Vec2 v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  double r = std::remainder(a, kTwoPi);
  if (r <= -kPi) r += kTwoPi;
  return r;
}

struct Pose2 {
  double x{0.0};
  double y{0.0};
  double theta{0.0};

  constexpr Vec2 position() const { return {x, y}; }

  /// Maps a point expressed in this pose's frame into the parent frame.
  Vec2 to_world(Vec2 local) const { return position() + rotate(local, theta); }
  /// Maps a parent-frame point into this pose's frame.
  Vec2 to_local(Vec2 world) const { return rotate(world - position(), -theta); }
  /// Pose `local` (expressed in this frame) in the parent frame.
  Pose2 compose(const Pose2& local) const {
    const Vec2 p = to_world(local.position());
    return {p.x, p.y, wrap_angle(theta + local.theta)};
  }

  constexpr bool operator==(const Pose2&) const = default;
};

/// sin(x)/x with a series expansion near zero.
inline double sinc(double x) {
  if (std::abs(x) < 1e-4) {
    const double x2 = x * x;
    return 1.0 - x2 / 6.0 + x2 * x2 / 120.0;
  }
  return std::sin(x) / x;
}

/// d/dx sinc(x).
inline double sinc_derivative(double x) {
  if (std::abs(x) < 1e-4) {
    const double x2 = x * x;
    return -x / 3.0 + x * x2 / 30.0;
  }
  return (x * std::cos(x) - std::sin(x)) / (x * x);
}

/// Pose reached from `start` after driving body speed `v` and turn rate
/// `omega` for `dt` seconds. Closed-form arc in chord form, stable at omega=0.
inline Pose2 integrate_arc(const Pose2& start, double v, double omega, double dt) {
  const double half = 0.5 * omega * dt;
  const double chord = v * dt * sinc(half);
  const double heading = start.theta + half;
  return {start.x + chord * std::cos(heading), start.y + chord * std::sin(heading),
          wrap_angle(start.theta + omega * dt)};
}

/// Rectangular footprint centred on the robot origin, x forward.
struct Footprint {
  double length{0.508};
  double width{0.430};

  constexpr double half_length() const { return 0.5 * length; }
  constexpr double half_width() const { return 0.5 * width; }
  double circumradius() const { return std::hypot(half_length(), half_width()); }
  constexpr Footprint inflated(double margin) const {
    return {length + 2.0 * margin, width + 2.0 * margin};
  }

  /// Corners in the robot frame, counter-clockwise starting front-right.
  std::array<Vec2, 4> corners() const {
    const double a = half_length();
    const double b = half_width();
    return {Vec2{a, -b}, Vec2{a, b}, Vec2{-a, b}, Vec2{-a, -b}};
  }
  std::array<Vec2, 4> corners(const Pose2& pose) const {
    auto c = corners();
    for (auto& p : c) p = pose.to_world(p);
    return c;
  }
};

using Polygon = std::vector<Vec2>;

inline double signed_area(std::span<const Vec2> poly) {
  double a = 0.0;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
    a += poly[i].cross(poly[(i + 1) % n]);
  }
  return 0.5 * a;
}

/// Even-odd containment for simple polygons of either orientation.
inline bool point_in_polygon(Vec2 p, std::span<const Vec2> poly) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2 a = poly[i];
    const Vec2 b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

/// Closed containment for a counter-clockwise convex polygon.
inline bool point_in_convex(Vec2 p, std::span<const Vec2> poly) {
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = poly[i];
    const Vec2 b = poly[(i + 1) % n];
    if ((b - a).cross(p - a) < 0.0) return false;
  }
  return true;
}

inline double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squared_norm();
  double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
  return (p - (a + ab * t)).norm();
}

/// Distance from `p` to the boundary of `poly` (zero if on it).
inline double distance_to_boundary(Vec2 p, std::span<const Vec2> poly) {
  double best = INFINITY;
  for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
    best = std::min(best, point_segment_distance(p, poly[i], poly[(i + 1) % n]));
  }
  return best;
}

inline void make_ccw(Polygon& poly) {
  if (signed_area(poly) < 0.0) std::reverse(poly.begin(), poly.end());
}

}  // namespace barn
