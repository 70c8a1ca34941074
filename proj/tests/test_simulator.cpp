#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "barn/simulator.hpp"
#include "fixtures.hpp"

using namespace barn;

namespace {

Pose2 euler(Pose2 p, double v, double w, double T, int n) {
  const double h = T / n;
  for (int i = 0; i < n; ++i) {
    p.x += v * std::cos(p.theta) * h;
    p.y += v * std::sin(p.theta) * h;
    p.theta += w * h;
  }
  return p;
}

// Exact polygon/square overlap by separating axes over both shapes' edges.
bool sat_overlap(const std::array<Vec2, 4>& a, const std::array<Vec2, 4>& b) {
  for (const auto* poly : {&a, &b}) {
    for (int i = 0; i < 4; ++i) {
      const Vec2 e = (*poly)[(i + 1) % 4] - (*poly)[i];
      const Vec2 n{-e.y, e.x};
      double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
      for (const auto& p : a) amin = std::min(amin, n.dot(p)), amax = std::max(amax, n.dot(p));
      for (const auto& p : b) bmin = std::min(bmin, n.dot(p)), bmax = std::max(bmax, n.dot(p));
      if (amax < bmin || bmax < amin) return false;
    }
  }
  return true;
}

RobotParams instant() {
  RobotParams r;
  r.max_wheel_accel = std::numeric_limits<double>::infinity();
  return r;
}

}  // namespace

TEST(Kinematics, ArcMatchesFineEuler) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> v(-2.0, 2.0), w(-5.0, 5.0);
  for (int i = 0; i < 50; ++i) {
    const double vi = v(rng), wi = w(rng);
    const Pose2 a = integrate_arc({}, vi, wi, 1.0);
    const Pose2 b = euler({}, vi, wi, 1.0, 200000);
    EXPECT_NEAR(a.x, b.x, 1e-4);
    EXPECT_NEAR(a.y, b.y, 1e-4);
  }
}

TEST(Kinematics, ZeroTurnRateIsStraight) {
  const Pose2 p = integrate_arc({1.0, 2.0, 0.5}, 1.5, 0.0, 2.0);
  EXPECT_NEAR(p.x, 1.0 + 3.0 * std::cos(0.5), 1e-12);
  EXPECT_NEAR(p.y, 2.0 + 3.0 * std::sin(0.5), 1e-12);
  const Pose2 q = integrate_arc({}, 1.0, 1e-12, 1.0);
  EXPECT_NEAR(q.x, 1.0, 1e-12);
  EXPECT_NEAR(q.y, 0.0, 1e-11);
}

TEST(Kinematics, QuarterCircle) {
  const Pose2 p = integrate_arc({}, kPi / 2, kPi / 2, 1.0);
  EXPECT_NEAR(p.x, 1.0, 1e-12);
  EXPECT_NEAR(p.y, 1.0, 1e-12);
  EXPECT_NEAR(p.theta, kPi / 2, 1e-12);
}

TEST(Step, InstantWheelsFollowCommand) {
  const RobotParams r = instant();
  const StepResult s = step({}, {1.0, 0.0}, 0.1, r);
  EXPECT_NEAR(s.state.x, 0.1, 1e-12);
  EXPECT_NEAR(s.state.v(), 1.0, 1e-12);
  EXPECT_FALSE(s.clamped);
}

TEST(Step, ClampsKeepingCurvature) {
  const RobotParams r = instant();
  const StepResult s = step({}, {2.0, 2.0}, 0.1, r);
  EXPECT_TRUE(s.clamped);
  EXPECT_NEAR(std::max(std::abs(s.state.vl), std::abs(s.state.vr)), r.max_speed, 1e-12);
  EXPECT_NEAR(s.state.omega(r.wheel_separation) / s.state.v(), 1.0, 1e-12);
}

TEST(Step, WheelSlewLimit) {
  RobotParams r;
  RobotState s;
  s = step(s, {2.0, 0.0}, 0.1, r).state;
  EXPECT_NEAR(s.vl, 0.3, 1e-12);
  EXPECT_NEAR(s.vr, 0.3, 1e-12);
  for (int i = 0; i < 10; ++i) s = step(s, {2.0, 0.0}, 0.1, r).state;
  EXPECT_NEAR(s.v(), 2.0, 1e-12);
}

TEST(Lidar, BeamLayout) {
  const LidarParams l;
  const auto a = beam_angles(l);
  ASSERT_EQ(a.size(), 720u);
  EXPECT_NEAR(a.front(), -a.back(), 1e-12);
  EXPECT_GT(a.front(), -0.75 * kPi);
  EXPECT_NEAR(a[1] - a[0], 1.5 * kPi / 720, 1e-12);
}

TEST(Lidar, MatchesRayMarch) {
  std::mt19937_64 rng(9);
  OccupancyGrid g = make_walled_grid(30, 30, 0.15);
  std::bernoulli_distribution fill(0.08);
  for (int r = 1; r < 31; ++r)
    for (int c = 1; c < 31; ++c) g.set(c, r, fill(rng));
  std::uniform_real_distribution<double> pos(0.5, 4.0), ang(-kPi, kPi);
  LidarParams l;
  l.num_beams = 90;
  for (int t = 0; t < 20; ++t) {
    const Pose2 pose{pos(rng), pos(rng), ang(rng)};
    if (g.occupied(g.cell_of(pose.position()))) continue;
    const LidarScan scan = raycast_scan(g, pose, l, nullptr);
    for (std::size_t i = 0; i < scan.size(); ++i) {
      const Vec2 d = unit(pose.theta + scan.angles[i]);
      // Nearest entry into any occupied square, by slab intersection.
      double s = l.max_range;
      for (int r = 0; r < g.height; ++r)
        for (int c = 0; c < g.width; ++c) {
          if (!g.occupied(c, r)) continue;
          double lo = 0.0, hi = l.max_range;
          const Vec2 o = pose.position(), mn = g.origin + Vec2{c * g.resolution, r * g.resolution};
          for (int ax = 0; ax < 2; ++ax) {
            const double oa = ax ? o.y : o.x, da = ax ? d.y : d.x, m = ax ? mn.y : mn.x;
            if (std::abs(da) < 1e-15) {
              if (oa < m || oa > m + g.resolution) hi = -1.0;
              continue;
            }
            const double a = (m - oa) / da, b = (m + g.resolution - oa) / da;
            lo = std::max(lo, std::min(a, b));
            hi = std::min(hi, std::max(a, b));
          }
          if (lo <= hi) s = std::min(s, lo);
        }
      EXPECT_NEAR(scan.ranges[i], s, 1e-9) << t << " beam " << i;
    }
  }
}

TEST(Lidar, NoiseIsSeeded) {
  const auto g = make_walled_grid(20, 20, 0.15);
  LidarParams l;
  l.noise_sigma = 0.01;
  std::mt19937_64 a(3), b(3);
  EXPECT_EQ(raycast_scan(g, {1.5, 1.5, 0.3}, l, &a).ranges,
            raycast_scan(g, {1.5, 1.5, 0.3}, l, &b).ranges);
}

TEST(Collision, MatchesSeparatingAxes) {
  std::mt19937_64 rng(4);
  OccupancyGrid g(20, 20, 0.15);
  std::bernoulli_distribution fill(0.05);
  for (int r = 0; r < 20; ++r)
    for (int c = 0; c < 20; ++c) g.set(c, r, fill(rng));
  std::uniform_real_distribution<double> pos(0.5, 2.5), ang(-kPi, kPi);
  const Footprint fp;
  int hits = 0;
  for (int t = 0; t < 500; ++t) {
    const Pose2 pose{pos(rng), pos(rng), ang(rng)};
    const auto body = fp.corners(pose);
    bool expect = false;
    for (int r = 0; r < 20 && !expect; ++r) {
      for (int c = 0; c < 20 && !expect; ++c) {
        if (!g.occupied(c, r)) continue;
        const Vec2 o = g.cell_center(c, r);
        const double h = 0.075;
        expect = sat_overlap(body, {Vec2{o.x - h, o.y - h}, Vec2{o.x + h, o.y - h},
                                    Vec2{o.x + h, o.y + h}, Vec2{o.x - h, o.y + h}});
      }
    }
    EXPECT_EQ(check_collision(g, pose, fp), expect) << t;
    hits += expect;
  }
  EXPECT_GT(hits, 50);
  EXPECT_LT(hits, 450);
}

TEST(Trial, StraightPlannerReachesGoal) {
  const auto env = barn::testing::empty_course();
  ConstantPlanner p({2.0, 0.0});
  const TrialRecord r = run_trial(env, p, RobotParams{}, LidarParams{}, {100.0, 0.3});
  EXPECT_EQ(r.outcome, TrialOutcome::success);
  EXPECT_LT(r.actual_time, 3.0);
}

TEST(Trial, NullPlannerTimesOut) {
  const auto env = barn::testing::empty_course();
  ConstantPlanner p({0.0, 0.0});
  const TrialRecord r = run_trial(env, p, RobotParams{}, LidarParams{}, {2.0, 0.3});
  EXPECT_EQ(r.outcome, TrialOutcome::timeout);
  EXPECT_NEAR(r.actual_time, 2.0, 1e-9);
}

TEST(Trial, DrivingIntoWallCollides) {
  auto env = barn::testing::empty_course();
  ConstantPlanner p({-1.0, 0.0});
  const TrialRecord r = run_trial(env, p, RobotParams{}, LidarParams{}, {10.0, 0.3});
  EXPECT_EQ(r.outcome, TrialOutcome::collision);
  ASSERT_TRUE(r.collision_pose.has_value());
  EXPECT_TRUE(check_collision(env.grid, *r.collision_pose, RobotParams{}.footprint));
}

TEST(Trial, Deterministic) {
  const auto env = barn::testing::empty_course();
  LidarParams l;
  l.noise_sigma = 0.02;
  ConstantPlanner a({1.0, 0.1}), b({1.0, 0.1});
  EXPECT_EQ(run_trial(env, a, RobotParams{}, l, {5.0, 0.3}, 7),
            run_trial(env, b, RobotParams{}, l, {5.0, 0.3}, 7));
}
