#include <gtest/gtest.h>

#include <random>

#include "barn/mpc_planner.hpp"
#include "fixtures.hpp"

using namespace barn;

namespace {

MpcParams no_hysteresis() {
  MpcParams p;
  p.hysteresis = 0.0;
  return p;
}

}  // namespace

TEST(Gradient, MatchesCentralDifferences) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    const MpcProblem prob = barn::testing::random_mpc_problem(rng);
    const auto u = barn::testing::random_controls(prob, rng);
    EXPECT_LT(barn::testing::gradient_error(prob, u), 1e-5) << i;
  }
}

TEST(Objective, ResumsToIndependentTotal) {
  std::mt19937_64 rng(4);
  MpcProblem prob = barn::testing::random_mpc_problem(rng);
  prob.w_obs = 0.0;
  prob.w_heading = 0.0;
  const auto u = barn::testing::random_controls(prob, rng);
  const MpcDecision d = make_decision(prob, u);
  const MpcParams& p = prob.params;

  double j = 0.0;
  for (const auto& c : d.controls) j += p.w_v * std::pow(std::abs(0.5 * (c.vr + c.vl)) - prob.v_ref, 2);
  for (std::size_t k = 0; k < d.states.size(); ++k)
    j += p.w_x * (d.states[k].position() - prob.reference.points[k]).squared_norm();
  for (std::size_t k = 0; k + 1 < d.controls.size(); ++k)
    j += p.w_a * (std::pow(d.controls[k].ar - d.controls[k + 1].ar, 2) +
                  std::pow(d.controls[k].al - d.controls[k + 1].al, 2));

  EXPECT_NEAR(objective(d.states, d.controls, prob.reference.points, prob.v_ref, p), j, 1e-9 * j);
  EXPECT_NEAR(mpc_cost(prob, u), j, 1e-9 * j);
}

TEST(Solve, DescendsAndRespectsBounds) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 10; ++i) {
    const MpcProblem prob = barn::testing::random_mpc_problem(rng);
    const MpcDecision d = solve(prob, barn::testing::random_controls(prob, rng));
    ASSERT_FALSE(d.cost_history.empty());
    for (std::size_t k = 1; k < d.cost_history.size(); ++k)
      EXPECT_LT(d.cost_history[k], d.cost_history[k - 1]);
    EXPECT_DOUBLE_EQ(d.objective_value, d.cost_history.back());
    const MpcParams& p = prob.params;
    for (const auto& c : d.controls) {
      EXPECT_LE(std::abs(c.vr), p.max_wheel_speed + 1e-12);
      EXPECT_LE(std::abs(c.vl), p.max_wheel_speed + 1e-12);
      EXPECT_LE(std::abs(c.ar), p.max_wheel_accel + 1e-9);
      EXPECT_LE(std::abs(c.al), p.max_wheel_accel + 1e-9);
    }
    EXPECT_EQ(d.states.size(), static_cast<std::size_t>(p.horizon));
  }
}

TEST(Solve, TracksStraightReference) {
  MpcProblem prob;
  prob.vr0 = prob.vl0 = 1.0;
  prob.v_ref = 1.0;
  for (int k = 0; k < prob.params.horizon; ++k) prob.reference.points.push_back({0.1 * k, 0.0});
  const MpcDecision d = solve(prob, {});
  const VelocityCommand c = d.first_command(prob.params.wheel_separation);
  EXPECT_NEAR(c.v, 1.0, 0.05);
  EXPECT_NEAR(c.omega, 0.0, 0.05);
}

TEST(Mode, ThresholdSides) {
  const MpcParams p = no_hysteresis();
  EXPECT_EQ(classify_mode(1.0 + 1e-6, 0.0, p).mode, ProximityMode::safe);
  EXPECT_EQ(classify_mode(1.0 - 1e-6, 0.0, p).mode, ProximityMode::obstacle_present);
  EXPECT_EQ(classify_mode(0.5 + 1e-6, 0.0, p).mode, ProximityMode::obstacle_present);
  EXPECT_EQ(classify_mode(0.5 - 1e-6, 0.0, p).mode, ProximityMode::close_obstacle);
  EXPECT_EQ(classify_mode(std::numeric_limits<double>::infinity(), 0.0, p).mode,
            ProximityMode::safe);
}

TEST(Mode, ReversingPastRightAngle) {
  const MpcParams p = no_hysteresis();
  EXPECT_FALSE(classify_mode(0.3, kPi / 2 - 1e-6, p).reversing);
  EXPECT_TRUE(classify_mode(0.3, kPi / 2 + 1e-6, p).reversing);
  EXPECT_TRUE(classify_mode(0.3, -kPi / 2 - 1e-6, p).reversing);
  EXPECT_TRUE(classify_mode(0.3, kPi, p).reversing);
  // Reversing only happens close to obstacles.
  EXPECT_FALSE(classify_mode(0.7, kPi, p).reversing);
}

TEST(Mode, Hysteresis) {
  const MpcParams p;
  EXPECT_EQ(classify_mode(0.52, 0.0, p, ProximityMode::close_obstacle).mode,
            ProximityMode::close_obstacle);
  EXPECT_EQ(classify_mode(0.56, 0.0, p, ProximityMode::close_obstacle).mode,
            ProximityMode::obstacle_present);
  EXPECT_EQ(classify_mode(1.02, 0.0, p, ProximityMode::obstacle_present).mode,
            ProximityMode::obstacle_present);
  EXPECT_EQ(classify_mode(1.02, 0.0, p, ProximityMode::safe).mode, ProximityMode::safe);
  EXPECT_EQ(classify_mode(0.52, 0.0, p, ProximityMode::safe).mode, ProximityMode::obstacle_present);
}

TEST(Mode, DistanceFromFootprint) {
  const Footprint fp;
  EXPECT_NEAR(footprint_distance({}, fp, {1.0, 0.0}), 1.0 - fp.half_length(), 1e-12);
  EXPECT_NEAR(footprint_distance({}, fp, {0.0, 0.0}), 0.0, 1e-12);
  EXPECT_NEAR(footprint_distance({0, 0, kPi / 2}, fp, {0.0, 1.0}), 1.0 - fp.half_length(), 1e-12);
  const std::vector<Vec2> pts{{0.7, 0.0}};
  const ModeState m = classify_mode(pts, {}, fp, 0.0, no_hysteresis());
  EXPECT_EQ(m.mode, ProximityMode::close_obstacle);
  EXPECT_NEAR(m.nearest, 0.7 - fp.half_length(), 1e-12);
}

TEST(Obstacles, StrideGivesFortyEight) {
  const OccupancyGrid map(40, 40, 0.15, {-3.0, -3.0});
  LidarScan scan;
  scan.angles = beam_angles(LidarParams{});
  scan.ranges.assign(scan.angles.size(), 1.0);
  const auto pts = extract_obstacles(scan, {}, map, Footprint{});
  ASSERT_EQ(pts.size(), 48u);
  EXPECT_NEAR(pts[0].norm(), 1.0, 1e-12);
  EXPECT_NEAR(pts[1].angle() - pts[0].angle(), 15 * 1.5 * kPi / 720, 1e-12);
}

TEST(Planner, CulDeSacStartsReversing) {
  const auto env = barn::testing::cul_de_sac();
  const BenchmarkConfig c;
  MpcParams m = c.mpc;
  MpcPlanner planner(m, c.global_planner, c.robot);
  const TrialRecord r = run_trial(env, planner, c.robot, c.lidar, {15.0, 0.3}, 1);
  ASSERT_FALSE(r.trajectory.empty());
  EXPECT_TRUE(r.trajectory.front().reversing);
  EXPECT_LT(r.trajectory.front().cmd.v, 0.0);
  EXPECT_EQ(r.outcome, TrialOutcome::success);
}
