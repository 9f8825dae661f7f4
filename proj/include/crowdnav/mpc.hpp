#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "crowdnav/dynamics.hpp"
#include "crowdnav/prediction.hpp"

namespace crowdnav {

/// Receding-horizon problem: minimise
///   sum_t |x_t - goal|^2_Q + |u_t|^2_R  +  |x_N - goal|^2_QT
///   + slack_weight * sum_{i,t} max(0, r_r + r_p + margin - |p_t - ped_i(t)|)^2
/// over the control sequence, with states given by RK4 rollout and controls
/// projected onto `limits`.
///
/// The quadratic penalty always leaves some penetration at the optimum, so
/// it acts on a disc widened by `safety_margin`; violation is still reported
/// against r_r + r_p.
struct MpcProblem {
  int horizon = 20;
  double dt = kDefaultDt;
  Eigen::Vector3d state_weight{1.0, 1.0, 0.1};
  Eigen::Vector2d input_weight{0.1, 0.05};
  Eigen::Vector3d terminal_weight{10.0, 10.0, 1.0};
  RobotState goal;
  ControlLimits limits;
  double robot_radius = 0.4;
  double ped_radius = 0.3;
  double slack_weight = 1e3;
  double safety_margin = 0.1;  // [m]
  int max_iters = 60;
  double solve_budget = 0.08;  // [s] wall clock per solve call
  double tolerance = 1e-6;
  bool swerve_seeds = true;    // extra left/right initial guesses when pedestrians are present

  double safety_distance() const { return robot_radius + ped_radius; }
  double penalty_distance() const { return safety_distance() + safety_margin; }
  void validate() const;
};

/// Pedestrian positions on the planner grid, horizon + 1 points each
/// (index 0 = now). `extra_radius`, when non-empty, has the same shape and is
/// added to the pedestrian radius per step.
struct ObstacleForecast {
  std::vector<Path2> positions;
  std::vector<std::vector<double>> extra_radius;

  std::size_t size() const { return positions.size(); }
  void validate(int horizon) const;
};

enum class MpcStatus { Optimal, IterationLimit, BudgetExceeded, InfeasibleFallback };

std::string to_string(MpcStatus status);
MpcStatus mpc_status_from_string(const std::string& text);

struct MpcSolution {
  std::vector<ControlInput> controls;
  std::vector<RobotState> predicted_states;
  double cost = 0.0;
  double max_constraint_violation = 0.0;
  double max_penetration = 0.0;
  int iterations = 0;
  double solve_time = 0.0;
  MpcStatus status = MpcStatus::Optimal;
  std::vector<double> objective_history;  // accepted iterates of the returned candidate
};

double stage_cost(const RobotState& state, const ControlInput& input, const MpcProblem& problem);
double terminal_cost(const RobotState& state, const MpcProblem& problem);

struct PenaltyResult {
  double penalty = 0.0;
  double max_violation = 0.0;    // against r_r + r_p
  double max_penetration = 0.0;  // into the penalised disc
};

PenaltyResult collision_penalty(const RobotTrajectory& states, const ObstacleForecast& forecast,
                                const MpcProblem& problem);

/// Total objective of a control sequence (rolled out from `initial`).
double objective(const MpcProblem& problem, const RobotState& initial,
                 const ObstacleForecast& forecast, std::span<const ControlInput> controls);

/// Previous plan advanced by one step, last control repeated.
std::vector<ControlInput> shift_controls(std::span<const ControlInput> controls);

/// Projected Gauss-Newton with backtracking line search on the single-shooting
/// formulation. Deterministic for identical inputs as long as the wall-clock
/// budget is not hit.
MpcSolution solve(const MpcProblem& problem, const RobotState& initial,
                  const ObstacleForecast& forecast, const MpcSolution* warm_start = nullptr);

/// Braking plan: linear velocity driven to zero as fast as the bounds allow
/// in one step, heading held.
MpcSolution braking_fallback(const MpcProblem& problem, const RobotState& initial,
                             double current_speed);

enum class RepresentativeStrategy { Mean, Medoid, Inflated };

std::string to_string(RepresentativeStrategy strategy);
RepresentativeStrategy representative_strategy_from_string(const std::string& text);

/// One trajectory (plus optional per-step radius inflation) standing in for
/// a sample set in the collision constraints.
struct Representative {
  Path2 trajectory;                // horizon points, like one sample
  std::vector<double> extra_radius;  // empty unless Inflated
};

/// Mean: per-step sample mean. Medoid: the sample with the smallest summed
/// distance to all others. Inflated: mean trajectory with
/// inflation_scale * sqrt(lambda_max(cov_t)) added to the pedestrian radius.
Representative select_representative(const PredictionSet& pred, RepresentativeStrategy strategy,
                                     double inflation_scale = 2.0);

}  // namespace crowdnav
