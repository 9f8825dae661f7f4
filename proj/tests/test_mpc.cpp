#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "crowdnav/metrics.hpp"
#include "crowdnav/mpc.hpp"
#include "test_support.hpp"

using namespace crowdnav;
using namespace crowdnav::testing;

namespace {

RobotTrajectory states_at(std::initializer_list<Vec2> points) {
  RobotTrajectory t;
  for (const auto& p : points) t.states.push_back({p.x(), p.y(), 0.0});
  return t;
}

double median(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

TEST(StageCost, HandValues) {
  MpcProblem p;
  p.goal = {1, 2, 0.5};
  EXPECT_EQ(stage_cost(p.goal, {0, 0}, p), 0.0);

  p.state_weight = {1, 1, 0};
  p.input_weight = {0, 0};
  EXPECT_NEAR(stage_cost({4, 6, 2.0}, {0.3, 0.3}, p), 25.0, 1e-12);

  p.state_weight = {0, 0, 0};
  p.input_weight = {1, 1};
  EXPECT_NEAR(stage_cost({4, 6, 2.0}, {0.5, -0.5}, p), 0.5, 1e-15);
}

TEST(TerminalCost, ScalingAndWrapping) {
  MpcProblem p;
  p.goal = {0, 0, 0};
  EXPECT_EQ(terminal_cost(p.goal, p), 0.0);
  p.terminal_weight = 10.0 * p.state_weight;
  const RobotState s{0.7, -0.2, 0.4};
  p.input_weight = {0, 0};
  EXPECT_NEAR(terminal_cost(s, p), 10.0 * stage_cost(s, {0, 0}, p), 1e-12);
  EXPECT_NEAR(terminal_cost({0, 0, 2.0 * std::numbers::pi}, p), 0.0, 1e-20);
}

TEST(CollisionPenalty, BoundaryAndHandValue) {
  MpcProblem p;
  p.safety_margin = 0.0;
  const double r = p.safety_distance();
  ObstacleForecast far;
  far.positions = {{Vec2(5, 0), Vec2(5, 0)}};
  auto res = collision_penalty(states_at({{0, 0}, {0.1, 0}}), far, p);
  EXPECT_EQ(res.penalty, 0.0);
  EXPECT_EQ(res.max_violation, 0.0);

  ObstacleForecast edge;
  edge.positions = {{Vec2(r, 0), Vec2(10, 0)}};
  res = collision_penalty(states_at({{0, 0}, {0, 0}}), edge, p);
  EXPECT_EQ(res.penalty, 0.0);
  EXPECT_EQ(res.max_violation, 0.0);

  ObstacleForecast inside;
  inside.positions = {{Vec2(10, 0), Vec2(r - 0.1, 0)}};
  res = collision_penalty(states_at({{0, 0}, {0, 0}}), inside, p);
  EXPECT_NEAR(res.penalty, p.slack_weight * 0.01, 1e-9);
  EXPECT_NEAR(res.max_violation, 0.1, 1e-12);
}

TEST(CollisionPenalty, MarginWidensPenaltyButNotViolation) {
  MpcProblem p;
  p.safety_margin = 0.1;
  ObstacleForecast f;
  f.positions = {{Vec2(p.safety_distance() + 0.05, 0)}};
  const auto res = collision_penalty(states_at({{0, 0}}), f, p);
  EXPECT_NEAR(res.penalty, p.slack_weight * 0.05 * 0.05, 1e-9);
  EXPECT_EQ(res.max_violation, 0.0);
  EXPECT_NEAR(res.max_penetration, 0.05, 1e-12);
}

TEST(ShiftControls, DropsFirstAndRepeatsLast) {
  const std::vector<ControlInput> u{{1, 0}, {0.5, 0.1}, {0.2, -0.3}};
  const auto s = shift_controls(u);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0], u[1]);
  EXPECT_EQ(s[1], u[2]);
  EXPECT_EQ(s[2], u[2]);
}

TEST(Solve, AtGoalStaysPut) {
  MpcProblem p;
  p.goal = {0, 0, 0};
  const auto sol = solve(p, {0, 0, 0}, {});
  for (const auto& u : sol.controls) EXPECT_LE(std::hypot(u.v, u.omega), 1e-3);
  EXPECT_LE(sol.cost, 1e-6);
  EXPECT_EQ(sol.status, MpcStatus::Optimal);
}

TEST(Solve, FreeSpaceProgressAndMonotoneObjective) {
  MpcProblem p;
  p.goal = {3, 0, 0};
  p.solve_budget = 10.0;
  const RobotState x0{0, 0, 0};
  const auto sol = solve(p, x0, {});
  ASSERT_EQ(sol.predicted_states.size(), static_cast<std::size_t>(p.horizon + 1));
  const Vec2 goal(3, 0);
  EXPECT_LT((sol.predicted_states.back().position() - goal).norm(), (x0.position() - goal).norm());
  ASSERT_FALSE(sol.objective_history.empty());
  for (std::size_t i = 1; i < sol.objective_history.size(); ++i) {
    EXPECT_LE(sol.objective_history[i], sol.objective_history[i - 1]);
  }
  EXPECT_NEAR(sol.cost, objective(p, x0, {}, sol.controls), 1e-9 * (1 + sol.cost));
}

TEST(Solve, PlanIsRolloutAndInsideBounds) {
  auto inst = stationary_obstacle();
  inst.problem.limits = {{-0.5, 0.8}, {-0.6, 0.6}};
  const auto sol = solve(inst.problem, inst.initial, inst.forecast);
  const auto traj = rollout(inst.initial, sol.controls, inst.problem.dt);
  EXPECT_EQ(traj.states, sol.predicted_states);
  for (const auto& u : sol.controls) EXPECT_TRUE(inst.problem.limits.contains(u));
}

TEST(Solve, StationaryObstacleIsAvoided) {
  const auto inst = stationary_obstacle();
  const auto sol = solve(inst.problem, inst.initial, inst.forecast);
  EXPECT_LE(sol.max_constraint_violation, 1e-3);
  double lateral = 0.0;
  for (const auto& s : sol.predicted_states) {
    lateral = std::max(lateral, std::abs(s.y));
    EXPECT_GE((s.position() - Vec2(1, 0)).norm(), inst.problem.safety_distance() - 1e-3);
  }
  EXPECT_GT(lateral, 0.3);
}

TEST(Solve, PenaltyExactnessTrend) {
  // Without the margin the penalty alone governs the violation.
  auto a = stationary_obstacle(1e3);
  auto b = stationary_obstacle(1e4);
  a.problem.safety_margin = 0.0;
  b.problem.safety_margin = 0.0;
  const auto sa = solve(a.problem, a.initial, a.forecast);
  const auto sb = solve(b.problem, b.initial, b.forecast);
  EXPECT_GT(sa.max_constraint_violation, 0.0);
  EXPECT_LE(2.0 * sb.max_constraint_violation, sa.max_constraint_violation);

  // With the margin the same holds for the penetration of the widened disc.
  const auto ma = stationary_obstacle(1e3);
  const auto mb = stationary_obstacle(1e4);
  const auto ta = solve(ma.problem, ma.initial, ma.forecast);
  const auto tb = solve(mb.problem, mb.initial, mb.forecast);
  EXPECT_LE(2.0 * tb.max_penetration, ta.max_penetration);
}

TEST(Solve, DeterministicForIdenticalInput) {
  const auto inst = stationary_obstacle();
  const auto a = solve(inst.problem, inst.initial, inst.forecast);
  const auto b = solve(inst.problem, inst.initial, inst.forecast);
  EXPECT_EQ(a.controls, b.controls);
  EXPECT_EQ(a.cost, b.cost);
  EXPECT_EQ(a.iterations, b.iterations);
}

TEST(Solve, WarmStartNeedsNoMoreIterations) {
  MpcProblem p;
  p.goal = {4, 3, 0};
  p.swerve_seeds = false;
  p.solve_budget = 10.0;
  std::vector<int> cold, warm;
  RobotState x{0, 0, 0};
  MpcSolution prev;
  for (int k = 0; k < 30; ++k) {
    ObstacleForecast f;
    Path2 ped;
    for (int t = 0; t <= p.horizon; ++t) ped.emplace_back(2.0 - 0.1 * (k + t) * 0.5, 2.5);
    f.positions.push_back(ped);
    const auto c = solve(p, x, f);
    const auto w = solve(p, x, f, k > 0 ? &prev : nullptr);
    cold.push_back(c.iterations);
    warm.push_back(w.iterations);
    prev = w;
    x = rk4_step(x, w.controls.front(), p.dt);
  }
  EXPECT_LE(median(warm), median(cold));
}

TEST(Solve, NonFiniteObjectiveFallsBackToBraking) {
  MpcProblem p;
  p.goal = {0, 0, 0};
  const auto sol = solve(p, {1e200, 0, 0}, {});
  EXPECT_EQ(sol.status, MpcStatus::InfeasibleFallback);
  ASSERT_EQ(sol.controls.size(), static_cast<std::size_t>(p.horizon));
  for (const auto& u : sol.controls) EXPECT_EQ(u.omega, 0.0);
}

TEST(BrakingFallback, RampsSpeedToZeroHoldingHeading) {
  MpcProblem p;
  p.limits.v = {-0.5, 0.5};
  const auto sol = braking_fallback(p, {0, 0, 0.3}, 0.9);
  EXPECT_EQ(sol.status, MpcStatus::InfeasibleFallback);
  EXPECT_EQ(sol.controls.front().v, 0.0);
  for (const auto& u : sol.controls) {
    EXPECT_EQ(u.v, 0.0);
    EXPECT_EQ(u.omega, 0.0);
  }
  for (const auto& s : sol.predicted_states) EXPECT_EQ(s.theta, 0.3);

  MpcProblem slow;
  slow.limits.v = {0.0, 0.25};
  const auto ramp = braking_fallback(slow, {0, 0, 0}, 0.6);
  EXPECT_NEAR(ramp.controls[0].v, 0.25, 1e-15);  // projected onto the bound
  EXPECT_NEAR(ramp.controls[1].v, 0.1, 1e-15);
  EXPECT_EQ(ramp.controls[2].v, 0.0);
}

TEST(Solve, RejectsMalformedForecast) {
  MpcProblem p;
  ObstacleForecast f;
  f.positions.push_back(Path2(3, Vec2(1, 0)));
  EXPECT_THROW(solve(p, {0, 0, 0}, f), std::invalid_argument);
}

TEST(Status, StringRoundTrip) {
  for (auto s : {MpcStatus::Optimal, MpcStatus::IterationLimit, MpcStatus::BudgetExceeded,
                 MpcStatus::InfeasibleFallback}) {
    EXPECT_EQ(mpc_status_from_string(to_string(s)), s);
  }
  EXPECT_THROW(mpc_status_from_string("nope"), std::invalid_argument);
}

TEST(SelectRepresentative, SingleSampleUnchanged) {
  PredictionSet s(0, 1, 3, 0.4, Vec2::Zero());
  s.at(0, 0) = {1, 2};
  s.at(0, 1) = {2, 3};
  s.at(0, 2) = {3, 5};
  for (auto st : {RepresentativeStrategy::Mean, RepresentativeStrategy::Medoid,
                  RepresentativeStrategy::Inflated}) {
    const auto r = select_representative(s, st);
    EXPECT_EQ(r.trajectory, Path2(s.sample(0).begin(), s.sample(0).end()));
  }
}

TEST(SelectRepresentative, MirroredMeanOnAxis) {
  PredictionSet s(0, 2, 4, 0.4, Vec2::Zero());
  for (int t = 0; t < 4; ++t) {
    s.at(0, t) = {0.5 * t, 0.3 + 0.1 * t};
    s.at(1, t) = {0.5 * t, -0.3 - 0.1 * t};
  }
  for (const auto& p : select_representative(s, RepresentativeStrategy::Mean).trajectory) {
    EXPECT_NEAR(p.y(), 0.0, 1e-15);
  }
}

TEST(SelectRepresentative, InflationWithoutSpreadEqualsMean) {
  PredictionSet s(0, 4, 3, 0.4, Vec2::Zero());
  for (int m = 0; m < 4; ++m)
    for (int t = 0; t < 3; ++t) s.at(m, t) = {1.0 + t, -2.0};
  ASSERT_EQ(amv(s), 0.0);
  const auto mean = select_representative(s, RepresentativeStrategy::Mean);
  const auto infl = select_representative(s, RepresentativeStrategy::Inflated);
  EXPECT_EQ(infl.trajectory, mean.trajectory);
  for (double e : infl.extra_radius) EXPECT_EQ(e, 0.0);
}

TEST(SelectRepresentative, MedoidMatchesBruteForce) {
  std::mt19937_64 rng(15);
  const auto s = random_set(rng, 9, 6);
  int best = -1;
  double best_sum = 1e300;
  for (int a = 0; a < 9; ++a) {
    double sum = 0.0;
    for (int b = 0; b < 9; ++b)
      for (int t = 0; t < 6; ++t) sum += (s.at(a, t) - s.at(b, t)).norm();
    if (sum < best_sum) {
      best_sum = sum;
      best = a;
    }
  }
  const auto r = select_representative(s, RepresentativeStrategy::Medoid);
  EXPECT_EQ(r.trajectory, Path2(s.sample(best).begin(), s.sample(best).end()));
}

TEST(SelectRepresentative, InflationUsesCovarianceSpread) {
  std::mt19937_64 rng(16);
  const auto s = random_set(rng, 12, 5);
  const auto r = select_representative(s, RepresentativeStrategy::Inflated, 2.0);
  ASSERT_EQ(r.extra_radius.size(), 5u);
  for (int t = 0; t < 5; ++t) {
    EXPECT_NEAR(r.extra_radius[t], 2.0 * std::sqrt(max_eigenvalue(sample_covariance(s, t))),
                1e-12);
  }
}
