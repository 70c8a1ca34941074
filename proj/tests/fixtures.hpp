#pragma once

#include <cmath>
#include <random>

#include "barn/barn.hpp"

namespace barn::testing {

/// Walled, obstacle-free course with a 4.5 m straight run north.
inline EnvironmentSpec empty_course(double max_speed = 2.0) {
  EnvironmentSpec env;
  env.grid = make_walled_grid(33, 40, 0.15);
  env.start = {2.625, 0.75, kPi / 2};
  env.goal = {2.625, 5.25};
  env.path_length = 4.5;
  env.optimal_time = optimal_time(env.path_length, max_speed);
  return env;
}

/// Robot parked facing into a dead-end pocket; the goal lies behind it.
inline EnvironmentSpec cul_de_sac() {
  EnvironmentSpec env;
  env.grid = make_walled_grid(33, 33, 0.15);
  for (int r = 18; r <= 26; ++r) {
    env.grid.set(14, r, true);
    env.grid.set(20, r, true);
  }
  for (int c = 14; c <= 20; ++c) env.grid.set(c, 26, true);
  env.start = {2.625, 3.5, kPi / 2};
  env.goal = {2.625, 1.0};
  env.path_length = 2.5;
  env.optimal_time = optimal_time(env.path_length, 2.0);
  return env;
}

/// Random optimiser instance: curved reference, scattered obstacles and a
/// feasible start away from the |v| = 0 and d = d_obs kinks.
inline MpcProblem random_mpc_problem(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MpcProblem prob;
  prob.start = {u(rng), u(rng), kPi * u(rng)};
  prob.vr0 = 1.0 + 0.5 * u(rng);
  prob.vl0 = 1.0 + 0.5 * u(rng);
  prob.v_ref = 1.0 + 0.8 * u(rng);
  prob.w_heading = u(rng) > 0.0 ? 2.0 : 0.0;
  const double bend = 0.8 * u(rng);
  for (int k = 0; k < prob.params.horizon; ++k) {
    const double s = 0.1 * k * prob.v_ref;
    prob.reference.points.push_back(prob.start.to_world({s, bend * s * s}));
  }
  prob.reference.heading = prob.start.theta + std::atan(2.0 * bend * 0.1 * prob.params.horizon);
  for (int i = 0; i < 6; ++i) prob.obstacles.push_back(prob.start.to_world({2.0 * u(rng) + 1.0, u(rng)}));
  return prob;
}

/// Controls near the start speeds, projected onto the feasible set.
inline std::vector<double> random_controls(const MpcProblem& prob, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  std::vector<double> x(static_cast<std::size_t>(2 * prob.controls()));
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = (i % 2 ? prob.vl0 : prob.vr0) + u(rng);
  project_controls(x, prob.vr0, prob.vl0, prob.params);
  return x;
}

/// Relative error of the analytic gradient against central differences.
inline double gradient_error(const MpcProblem& prob, const std::vector<double>& u,
                             double h = 1e-6) {
  std::vector<double> g;
  mpc_cost(prob, u, &g);
  double diff = 0.0, norm = 0.0;
  std::vector<double> x = u;
  for (std::size_t i = 0; i < u.size(); ++i) {
    x[i] = u[i] + h;
    const double jp = mpc_cost(prob, x);
    x[i] = u[i] - h;
    const double jm = mpc_cost(prob, x);
    x[i] = u[i];
    const double fd = (jp - jm) / (2.0 * h);
    diff += (g[i] - fd) * (g[i] - fd);
    norm += fd * fd;
  }
  return std::sqrt(diff) / std::max(std::sqrt(norm), 1e-12);
}

}  // namespace barn::testing
