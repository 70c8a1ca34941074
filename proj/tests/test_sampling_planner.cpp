#include <gtest/gtest.h>

#include <random>

#include "barn/sampling_planner.hpp"
#include "fixtures.hpp"

using namespace barn;

namespace {

bool covered(const ArcSample& arc, Vec2 p) {
  for (const auto& s : arc.shapes) {
    if (point_in_convex(p, s.polygon) || distance_to_boundary(p, s.polygon) < 1e-9) return true;
  }
  return false;
}

ArcSample random_arc(std::mt19937_64& rng, const Footprint& fp) {
  std::uniform_real_distribution<double> k(-3.0, 3.0), v(0.1, 2.0);
  std::bernoulli_distribution back(0.3);
  const double speed = back(rng) ? -v(rng) : v(rng);
  return build_arc_shapes(k(rng), speed, back(rng) ? 0.6 : 1.0, fp);
}

std::vector<Vec2> pocket() {
  // Walls left, right and ahead of a robot at the origin facing +x.
  std::vector<Vec2> pts;
  for (double x = -0.3; x <= 0.45; x += 0.05) {
    pts.push_back({x, 0.45});
    pts.push_back({x, -0.45});
  }
  for (double y = -0.45; y <= 0.45; y += 0.05) pts.push_back({0.45, y});
  return pts;
}

}  // namespace

TEST(ArcShapes, StraightIsOneRectangle) {
  const Footprint fp;
  const ArcSample arc = build_arc_shapes(0.0, 1.0, 1.0, fp);
  ASSERT_EQ(arc.shapes.size(), 1u);
  EXPECT_EQ(arc.shapes[0].kind, ShapeKind::rectangle);
  EXPECT_NEAR(signed_area(arc.shapes[0].polygon), (1.0 + fp.length) * fp.width, 1e-12);
  const ArcSample rev = build_arc_shapes(0.0, -0.5, 1.0, fp);
  EXPECT_TRUE(covered(rev, {-0.5 - fp.half_length() + 1e-6, 0.0}));
  EXPECT_FALSE(covered(rev, {fp.half_length() + 1e-3, 0.0}));
}

TEST(ArcShapes, CoverSweptFootprint) {
  std::mt19937_64 rng(12);
  const Footprint fp = Footprint{}.inflated(0.05);
  for (int i = 0; i < 60; ++i) {
    const ArcSample arc = random_arc(rng, fp);
    const auto c = fp.corners();
    for (int t = 0; t <= 100; ++t) {
      const Pose2 pose = integrate_arc({}, arc.speed, arc.curvature * arc.speed, arc.duration * t / 100);
      for (int e = 0; e < 4; ++e)
        for (int j = 0; j <= 8; ++j)
          ASSERT_TRUE(covered(arc, pose.to_world(c[e] + (c[(e + 1) % 4] - c[e]) * (j / 8.0))))
              << "k " << arc.curvature << " v " << arc.speed << " t " << t;
    }
    for (std::size_t s = 0; s < arc.shapes.size(); ++s)
      EXPECT_GT(signed_area(arc.shapes[s].polygon), 0.0);
  }
}

TEST(ArcShapes, TinyCurvatureMatchesStraight) {
  const Footprint fp;
  const ArcSample bent = build_arc_shapes(1e-9, 1.0, 1.0, fp);
  const double a = fp.half_length(), b = fp.half_width();
  for (const auto& s : bent.shapes) {
    for (const auto& v : s.polygon) {
      EXPECT_GE(v.x, -a - 1e-6);
      EXPECT_LE(v.x, 1.0 + a + 1e-6);
      EXPECT_LE(std::abs(v.y), b + 1e-6);
    }
  }
  for (double x = -a + 1e-4; x < 1.0 + a; x += 0.01)
    for (double y = -b + 1e-4; y < b; y += 0.02) EXPECT_TRUE(covered(bent, {x, y}));
}

TEST(CheckArc, AgreesWithBruteForce) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-2.5, 2.5);
  const Footprint fp = Footprint{}.inflated(0.05);
  for (int scene = 0; scene < 300; ++scene) {
    const ArcSample arc = random_arc(rng, fp);
    std::vector<Vec2> pts(30);
    for (auto& p : pts) p = {u(rng), u(rng)};
    const FeasibilityResult r = check_arc(arc, PointSet::from_points(pts));
    std::optional<int> first;
    for (std::size_t s = 0; s < arc.shapes.size() && !first; ++s)
      for (const auto& p : pts)
        if (point_in_convex(p, arc.shapes[s].polygon)) first = static_cast<int>(s);
    EXPECT_EQ(r.feasible, !first.has_value()) << scene;
    EXPECT_EQ(r.first_blocked_shape, first) << scene;
    if (first) {
      EXPECT_DOUBLE_EQ(r.clear_length, arc.shapes[*first].s_lo);
    }
  }
}

TEST(CheckArc, EmptyAndCentre) {
  const ArcSample arc = build_arc_shapes(1.0, 1.0, 1.0, Footprint{});
  const FeasibilityResult free = check_arc(arc, PointSet{});
  EXPECT_TRUE(free.feasible);
  EXPECT_DOUBLE_EQ(free.clear_length, 1.0);
  const std::vector<Vec2> centre{{0.0, 0.0}};
  const FeasibilityResult hit = check_arc(arc, PointSet::from_points(centre));
  EXPECT_FALSE(hit.feasible);
  EXPECT_EQ(hit.first_blocked_shape, 0);
  EXPECT_DOUBLE_EQ(hit.clear_length, 0.0);
}

TEST(Library, CurvatureGridAndWheelLimits) {
  const SamplingParams p;
  const auto k = curvature_samples(p);
  ASSERT_EQ(k.size(), 31u);
  EXPECT_DOUBLE_EQ(k.front(), -2.5);
  EXPECT_DOUBLE_EQ(k.back(), 2.5);
  EXPECT_EQ(k[15], 0.0);
  const ArcLibrary lib(p, Footprint{});
  for (const auto& tier : lib.forward()) {
    for (const auto& arc : tier) {
      const auto w = to_wheels(arc.command(), p.wheel_separation);
      EXPECT_LE(std::max(std::abs(w.left), std::abs(w.right)), p.max_wheel_speed + 1e-12);
    }
  }
  EXPECT_EQ(lib.backward().size(), 3 * 31u);
  for (const auto& arc : lib.backward()) EXPECT_LT(arc.speed, 0.0);
}

TEST(SelectForward, ExhaustiveOptimum) {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  const ArcLibrary lib(SamplingParams{}, Footprint{});
  for (int scene = 0; scene < 40; ++scene) {
    std::vector<Vec2> pts(25);
    for (auto& p : pts) p = {u(rng), u(rng)};
    const PointSet set = PointSet::from_points(pts);
    const Vec2 goal{std::abs(u(rng)), u(rng)};
    double best = std::numeric_limits<double>::infinity();
    for (const auto& tier : lib.forward())
      for (const auto& arc : tier)
        if (check_arc(arc, set).feasible)
          best = std::min(best, (arc.end_pose().position() - goal).norm());
    const auto choice = select_forward(lib, set, goal);
    if (std::isinf(best)) {
      EXPECT_FALSE(choice.has_value());
      continue;
    }
    ASSERT_TRUE(choice.has_value());
    EXPECT_DOUBLE_EQ(choice->goal_distance, best);
    EXPECT_TRUE(check_arc(lib.forward()[choice->tier][choice->sample], set).feasible);
  }
}

TEST(SelectForward, MirrorSymmetric) {
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  const ArcLibrary lib(SamplingParams{}, Footprint{});
  for (int scene = 0; scene < 20; ++scene) {
    std::vector<Vec2> pts(20), mirrored;
    for (auto& p : pts) {
      p = {u(rng), u(rng)};
      mirrored.push_back({p.x, -p.y});
    }
    const Vec2 goal{2.0, u(rng)};
    const auto a = select_forward(lib, PointSet::from_points(pts), goal);
    const auto b = select_forward(lib, PointSet::from_points(mirrored), {goal.x, -goal.y});
    ASSERT_EQ(a.has_value(), b.has_value());
    if (!a) continue;
    EXPECT_NEAR(a->cmd.v, b->cmd.v, 1e-12);
    EXPECT_NEAR(a->cmd.omega, -b->cmd.omega, 1e-12);
  }
}

TEST(SelectForward, OpenSpaceGoesStraightAtFullSpeed) {
  const ArcLibrary lib(SamplingParams{}, Footprint{});
  const auto c = select_forward(lib, PointSet{}, {2.0, 0.0});
  ASSERT_TRUE(c.has_value());
  EXPECT_DOUBLE_EQ(c->cmd.v, 2.0);
  EXPECT_DOUBLE_EQ(c->cmd.omega, 0.0);
}

TEST(SelectBackward, TieGoesToShortestStraight) {
  const ArcLibrary lib(SamplingParams{}, Footprint{});
  LidarScan scan;
  const BackwardChoice c = select_backward(lib, PointSet{}, scan);
  ASSERT_GE(c.sample, 0);
  EXPECT_DOUBLE_EQ(c.cmd.v, -0.25);
  EXPECT_DOUBLE_EQ(c.cmd.omega, 0.0);
}

TEST(SelectBackward, EscapesPocket) {
  const ArcLibrary lib(SamplingParams{}, Footprint{});
  const auto pts = pocket();
  const PointSet set = PointSet::from_points(pts);
  EXPECT_EQ(forward_options(lib, set, {}), 0);
  LidarScan scan;
  const BackwardChoice c = select_backward(lib, set, scan);
  ASSERT_GE(c.sample, 0);
  EXPECT_LT(c.cmd.v, 0.0);
  EXPECT_GT(c.score, 0);
  EXPECT_EQ(forward_options(lib, set, lib.backward()[c.sample].end_pose()), c.score);
}

TEST(SelectBackward, RotatesWhenBoxedIn) {
  const ArcLibrary lib(SamplingParams{}, Footprint{});
  std::vector<Vec2> pts;
  for (int i = 0; i < 72; ++i) pts.push_back(unit(i * kTwoPi / 72) * 0.4);
  const BackwardChoice c = select_backward(lib, PointSet::from_points(pts), LidarScan{});
  EXPECT_EQ(c.sample, -1);
  EXPECT_EQ(c.cmd.v, 0.0);
  EXPECT_NE(c.cmd.omega, 0.0);
}

TEST(Planner, CulDeSacBacksOut) {
  const auto env = barn::testing::cul_de_sac();
  const BenchmarkConfig cfg;
  auto p = make_planner("dwa", cfg, false);
  const TrialRecord r = run_trial(env, *p, cfg.robot, cfg.lidar, {15.0, 0.3}, 1);
  ASSERT_FALSE(r.trajectory.empty());
  EXPECT_EQ(r.trajectory.front().mode, "backward");
  EXPECT_LT(r.trajectory.front().cmd.v, 0.0);
  EXPECT_EQ(r.outcome, TrialOutcome::success);
}
