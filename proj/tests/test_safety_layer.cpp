#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "barn/safety_layer.hpp"
#include "fixtures.hpp"

using namespace barn;

namespace {

VelocityCommand random_command(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> v(-2.0, 2.0), w(-4.0, 4.0);
  std::uniform_int_distribution<int> kind(0, 5);
  switch (kind(rng)) {
    case 0: return {0.0, 0.0};
    case 1: return {0.0, w(rng)};
    case 2: return {v(rng), 0.0};
    default: return {v(rng), w(rng)};
  }
}

std::vector<Vec2> random_points(std::mt19937_64& rng, int n, double r) {
  std::uniform_real_distribution<double> u(-r, r);
  std::vector<Vec2> pts(static_cast<std::size_t>(n));
  for (auto& p : pts) p = {u(rng), u(rng)};
  return pts;
}

LidarScan scan_of(std::span<const Vec2> pts) {
  LidarScan s;
  s.max_range = 10.0;
  for (const auto& p : pts) {
    s.angles.push_back(p.angle());
    s.ranges.push_back(p.norm());
  }
  return s;
}

}  // namespace

TEST(Certify, AgreesWithUnfilteredContainment) {
  std::mt19937_64 rng(21);
  const Footprint fp;
  for (int scene = 0; scene < 300; ++scene) {
    const VelocityCommand cmd = random_command(rng);
    const auto pts = random_points(rng, 40, 2.0);
    const PointSet set = PointSet::from_points(pts, 0);
    const SafetyZone zone = build_zone(cmd, 0.5, fp, 0.05);
    std::vector<int> expect;
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (point_in_polygon(pts[i], zone.polygon)) expect.push_back(static_cast<int>(i));
    auto got = certify(cmd, set, 0.5, fp, 0.05).offending_points;
    std::sort(got.begin(), got.end());
    EXPECT_EQ(got, expect) << "scene " << scene;
  }
}

TEST(Zone, CoversSweptFootprint) {
  // Every point within the margin of the swept footprint lies in the zone.
  std::mt19937_64 rng(8);
  const Footprint fp;
  const double margin = 0.05;
  const auto c = fp.corners();
  for (int k = 0; k < 100; ++k) {
    const VelocityCommand cmd = random_command(rng);
    const SafetyZone zone = build_zone(cmd, 0.5, fp, margin);
    EXPECT_GT(signed_area(zone.polygon), 0.0);
    for (int i = 0; i <= 100; ++i) {
      const Pose2 pose = integrate_arc({}, cmd.v, cmd.omega, 0.005 * i);
      for (int e = 0; e < 4; ++e)
        for (int j = 0; j <= 10; ++j)
          for (int d = 0; d < 16; ++d) {
            const Vec2 q = c[e] + (c[(e + 1) % 4] - c[e]) * (j / 10.0) + unit(d * kTwoPi / 16) * margin;
            const Vec2 p = pose.to_world(q);
            const bool in = point_in_polygon(p, zone.polygon) ||
                            distance_to_boundary(p, zone.polygon) < 1e-9;
            ASSERT_TRUE(in) << "cmd " << cmd.v << "," << cmd.omega << " t " << 0.005 * i;
          }
    }
  }
}

TEST(Zone, Kinds) {
  const Footprint fp;
  EXPECT_EQ(build_zone({0, 0}, 0.5, fp, 0.05).kind, ZoneKind::stationary);
  EXPECT_EQ(build_zone({0, 1}, 0.5, fp, 0.05).kind, ZoneKind::rotation);
  EXPECT_EQ(build_zone({1, 0}, 0.5, fp, 0.05).kind, ZoneKind::linear);
  EXPECT_EQ(build_zone({1, 1}, 0.5, fp, 0.05).kind, ZoneKind::radial);
  EXPECT_THROW(build_zone({1, 0}, 0.0, fp, 0.05), std::invalid_argument);

  const SafetyZone lin = build_zone({1.0, 0.0}, 0.5, fp, 0.05);
  EXPECT_NEAR(signed_area(lin.polygon), (fp.length + 0.1 + 0.5) * (fp.width + 0.1), 1e-12);
  EXPECT_TRUE(lin.contains({0.25 + 0.05 + 0.5 - 0.01, 0.0}));
  EXPECT_FALSE(lin.contains({0.254 + 0.05 + 0.5 + 0.01, 0.0}));
  EXPECT_FALSE(lin.contains({-0.254 - 0.05 - 0.01, 0.0}));
}

TEST(Zone, TinyTurnRateApproachesRectangle) {
  const Footprint fp;
  const SafetyZone lin = build_zone({1.0, 0.0}, 0.5, fp, 0.05);
  const SafetyZone rad = build_zone({1.0, 1e-6}, 0.5, fp, 0.05);
  EXPECT_EQ(rad.kind, ZoneKind::radial);
  EXPECT_NEAR(signed_area(rad.polygon), signed_area(lin.polygon), 1e-4);
  for (const auto& v : lin.polygon) EXPECT_LT(distance_to_boundary(v, rad.polygon), 1e-4);
}

TEST(Certify, EmptyScanIsSafe) {
  const auto v = certify({2.0, 1.0}, PointSet{}, Footprint{}, SafetyParams{});
  EXPECT_TRUE(v.safe);
  EXPECT_EQ(v.suggested_recovery, Recovery::none);
}

TEST(Recover, Ladder) {
  const Footprint fp;
  const SafetyParams sp;
  auto wall_at = [](double x) {
    std::vector<Vec2> pts;
    for (double y = -0.6; y <= 0.6; y += 0.02) pts.push_back({x, y});
    return pts;
  };
  auto run = [&](double x, VelocityCommand blocked) {
    const auto pts = wall_at(x);
    return recover(scan_of(pts), PointSet::from_points(pts, 0), blocked, fp, sp);
  };
  RecoveryResult r = run(0.7, {1.0, 0.0});
  EXPECT_EQ(r.action, Recovery::slow_down);
  EXPECT_DOUBLE_EQ(r.cmd.v, 0.5);

  r = run(0.45, {1.0, 0.0});
  EXPECT_EQ(r.action, Recovery::slow_down);
  EXPECT_DOUBLE_EQ(r.cmd.v, 0.25);

  r = run(0.37, {1.0, 0.0});
  EXPECT_EQ(r.action, Recovery::back_up);
  EXPECT_DOUBLE_EQ(r.cmd.v, -0.3);

  // Far wall: half speed is refused, but turning in place fits.
  r = run(0.5, {2.0, 0.0});
  EXPECT_EQ(r.action, Recovery::rotate_in_place);
  EXPECT_EQ(r.cmd.v, 0.0);
}

TEST(Recover, TightMarginStillMoves) {
  const Footprint fp;
  // One point 2 cm off the left side, inside the 5 cm band.
  const std::vector<Vec2> pts{{0.0, fp.half_width() + 0.02}};
  const auto r = recover(scan_of(pts), PointSet::from_points(pts, 0), {1.0, 0.0}, fp,
                         SafetyParams{});
  EXPECT_NE(r.action, Recovery::none);
  SafetyParams tight;
  tight.margin = 0.01;
  EXPECT_TRUE(certify(r.cmd, PointSet::from_points(pts, 0), fp, tight).safe);
}

TEST(Recover, NonzeroOutputCertifies) {
  std::mt19937_64 rng(17);
  const Footprint fp;
  const SafetyParams sp;
  for (int k = 0; k < 300; ++k) {
    auto pts = random_points(rng, 15, 1.2);
    const PointSet set = PointSet::from_points(pts, 0);
    if (stationary_clearance(set, fp) < sp.margin) continue;
    const VelocityCommand blocked = random_command(rng);
    const auto r = recover(scan_of(pts), set, blocked, fp, sp);
    if (r.action == Recovery::none) {
      EXPECT_EQ(r.cmd, (VelocityCommand{0.0, 0.0}));
      continue;
    }
    EXPECT_TRUE(certify(r.cmd, set, fp, sp).safe) << k;
  }
}

TEST(Braking, TrajectoryStopsAndCoversCommand) {
  MotionContext m{1.5, 1.5, RobotParams{}};
  const auto path = braking_trajectory({0.5, 0.0}, m);
  ASSERT_GT(path.size(), 11u);
  // 0.1 s slewing 1.5 -> 1.2 m/s, then braking at 3 m/s^2.
  EXPECT_NEAR(path.back().x, 0.135 + 1.2 * 1.2 / 6.0, 0.01);
  const std::vector<Vec2> wall{{0.254 + 0.3, 0.0}};
  const PointSet set = PointSet::from_points(wall, 0);
  EXPECT_TRUE(certify({0.1, 0.0}, set, Footprint{}, SafetyParams{}).safe);
  EXPECT_FALSE(certify_in_motion({0.1, 0.0}, set, Footprint{}, SafetyParams{}, m).safe);
}

TEST(SafetyFilter, StopsStraightPlannerBeforeWall) {
  const auto env = barn::testing::empty_course();
  const RobotParams robot;
  SafetyFilter f(std::make_unique<ConstantPlanner>(VelocityCommand{2.0, 0.0}), SafetyParams{},
                 robot);
  auto moved = env;
  moved.goal = {2.625, 50.0};  // unreachable: drive until the wall
  const TrialRecord r = run_trial(moved, f, robot, LidarParams{}, {8.0, 0.3});
  EXPECT_EQ(r.outcome, TrialOutcome::timeout);
  EXPECT_GT(r.trajectory.back().pose.y, 4.0);
}
