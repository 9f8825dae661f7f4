#include "crowdnav/mpc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "crowdnav/metrics.hpp"

namespace crowdnav {

void MpcProblem::validate() const {
  if (horizon < 1 || !(dt > 0.0)) throw std::invalid_argument("MpcProblem: bad horizon or dt");
  if ((state_weight.array() < 0.0).any() || (input_weight.array() < 0.0).any() ||
      (terminal_weight.array() < 0.0).any() || slack_weight < 0.0) {
    throw std::invalid_argument("MpcProblem: weights must be >= 0");
  }
  if (!(robot_radius > 0.0) || !(ped_radius > 0.0)) {
    throw std::invalid_argument("MpcProblem: radii must be > 0");
  }
  if (limits.v.lo > limits.v.hi || limits.omega.lo > limits.omega.hi) {
    throw std::invalid_argument("MpcProblem: empty control bounds");
  }
  if (max_iters < 1 || !(solve_budget > 0.0) || !(tolerance > 0.0)) {
    throw std::invalid_argument("MpcProblem: bad termination settings");
  }
}

void ObstacleForecast::validate(int horizon) const {
  for (const auto& p : positions) {
    if (static_cast<int>(p.size()) != horizon + 1) {
      throw std::invalid_argument("ObstacleForecast: grid length does not match the horizon");
    }
    for (const auto& q : p) {
      if (!q.allFinite()) throw std::invalid_argument("ObstacleForecast: non-finite position");
    }
  }
  if (!extra_radius.empty()) {
    if (extra_radius.size() != positions.size()) {
      throw std::invalid_argument("ObstacleForecast: extra_radius shape mismatch");
    }
    for (const auto& r : extra_radius) {
      if (static_cast<int>(r.size()) != horizon + 1) {
        throw std::invalid_argument("ObstacleForecast: extra_radius length mismatch");
      }
    }
  }
}

std::string to_string(MpcStatus status) {
  switch (status) {
    case MpcStatus::Optimal: return "optimal";
    case MpcStatus::IterationLimit: return "iteration-limit";
    case MpcStatus::BudgetExceeded: return "budget-exceeded";
    case MpcStatus::InfeasibleFallback: return "infeasible-fallback";
  }
  return "unknown";
}

MpcStatus mpc_status_from_string(const std::string& text) {
  for (auto s : {MpcStatus::Optimal, MpcStatus::IterationLimit, MpcStatus::BudgetExceeded,
                 MpcStatus::InfeasibleFallback}) {
    if (to_string(s) == text) return s;
  }
  throw std::invalid_argument("unknown solver status '" + text + "'");
}

namespace {

Eigen::Vector3d goal_error(const RobotState& s, const RobotState& goal) {
  return {s.x - goal.x, s.y - goal.y, wrap_angle(s.theta - goal.theta)};
}

double extra_radius(const ObstacleForecast& forecast, std::size_t i, int t) {
  return forecast.extra_radius.empty() ? 0.0
                                       : forecast.extra_radius[i][static_cast<std::size_t>(t)];
}

}  // namespace

double stage_cost(const RobotState& state, const ControlInput& input, const MpcProblem& problem) {
  const Eigen::Vector3d e = goal_error(state, problem.goal);
  const Eigen::Vector2d u(input.v, input.omega);
  return e.cwiseProduct(e).dot(problem.state_weight) + u.cwiseProduct(u).dot(problem.input_weight);
}

double terminal_cost(const RobotState& state, const MpcProblem& problem) {
  const Eigen::Vector3d e = goal_error(state, problem.goal);
  return e.cwiseProduct(e).dot(problem.terminal_weight);
}

PenaltyResult collision_penalty(const RobotTrajectory& states, const ObstacleForecast& forecast,
                                const MpcProblem& problem) {
  PenaltyResult r;
  for (std::size_t i = 0; i < forecast.size(); ++i) {
    const auto& path = forecast.positions[i];
    const std::size_t steps = std::min(path.size(), states.states.size());
    for (std::size_t t = 0; t < steps; ++t) {
      const double d = (states.states[t].position() - path[t]).norm();
      const double extra = extra_radius(forecast, i, static_cast<int>(t));
      const double p = std::max(0.0, problem.penalty_distance() + extra - d);
      r.penalty += p * p;
      r.max_penetration = std::max(r.max_penetration, p);
      r.max_violation = std::max(r.max_violation, problem.safety_distance() + extra - d);
    }
  }
  r.penalty *= problem.slack_weight;
  return r;
}

double objective(const MpcProblem& problem, const RobotState& initial,
                 const ObstacleForecast& forecast, std::span<const ControlInput> controls) {
  const RobotTrajectory traj = rollout(initial, controls, problem.dt);
  double cost = 0.0;
  for (std::size_t t = 0; t < controls.size(); ++t) {
    cost += stage_cost(traj.states[t], controls[t], problem);
  }
  cost += terminal_cost(traj.states.back(), problem);
  return cost + collision_penalty(traj, forecast, problem).penalty;
}

std::vector<ControlInput> shift_controls(std::span<const ControlInput> controls) {
  if (controls.empty()) return {};
  std::vector<ControlInput> out(controls.begin() + 1, controls.end());
  out.push_back(controls.back());
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

// Residual form r(z) of the objective, f = r.r, with z = (v_0, w_0, v_1, ...).
class ResidualModel {
 public:
  ResidualModel(const MpcProblem& problem, const RobotState& initial,
                const ObstacleForecast& forecast)
      : p_(problem), x0_(initial), fc_(forecast), n_(problem.horizon) {
    rows_ = 3 * n_ + 2 * n_ + 3 + static_cast<int>(forecast.size()) * (n_ + 1);
    sq_state_ = problem.state_weight.cwiseSqrt();
    sq_input_ = problem.input_weight.cwiseSqrt();
    sq_terminal_ = problem.terminal_weight.cwiseSqrt();
    sq_slack_ = std::sqrt(problem.slack_weight);
  }

  int dim() const { return 2 * n_; }

  static std::vector<ControlInput> to_controls(const Eigen::VectorXd& z) {
    std::vector<ControlInput> u(static_cast<std::size_t>(z.size() / 2));
    for (std::size_t t = 0; t < u.size(); ++t) u[t] = {z[2 * t], z[2 * t + 1]};
    return u;
  }

  static Eigen::VectorXd to_vector(std::span<const ControlInput> u) {
    Eigen::VectorXd z(2 * static_cast<Eigen::Index>(u.size()));
    for (std::size_t t = 0; t < u.size(); ++t) {
      z[2 * t] = u[t].v;
      z[2 * t + 1] = u[t].omega;
    }
    return z;
  }

  Eigen::VectorXd project(Eigen::VectorXd z) const {
    for (int t = 0; t < n_; ++t) {
      z[2 * t] = p_.limits.v.clamp(z[2 * t]);
      z[2 * t + 1] = p_.limits.omega.clamp(z[2 * t + 1]);
    }
    return z;
  }

  double lower(int i) const { return i % 2 == 0 ? p_.limits.v.lo : p_.limits.omega.lo; }
  double upper(int i) const { return i % 2 == 0 ? p_.limits.v.hi : p_.limits.omega.hi; }

  double cost(const Eigen::VectorXd& z) const { return objective(p_, x0_, fc_, to_controls(z)); }

  // Residual and Jacobian at z; returns f = r.r.
  double linearize(const Eigen::VectorXd& z, Eigen::VectorXd& r, Eigen::MatrixXd& jac) const {
    const auto u = to_controls(z);
    const RobotTrajectory traj = rollout(x0_, u, p_.dt);
    r.setZero(rows_);
    jac.setZero(rows_, 2 * n_);
    Eigen::Matrix<double, 3, Eigen::Dynamic> sens = Eigen::MatrixXd::Zero(3, 2 * n_);

    int row = 0;
    const int collision_row0 = 3 * n_ + 2 * n_ + 3;
    for (int t = 0; t <= n_; ++t) {
      const RobotState& x = traj.states[static_cast<std::size_t>(t)];
      const Eigen::Vector3d e = goal_error(x, p_.goal);
      if (t < n_) {
        for (int i = 0; i < 3; ++i) {
          r[row] = sq_state_[i] * e[i];
          jac.row(row) = sq_state_[i] * sens.row(i);
          ++row;
        }
        for (int j = 0; j < 2; ++j) {
          r[row] = sq_input_[j] * z[2 * t + j];
          jac(row, 2 * t + j) = sq_input_[j];
          ++row;
        }
      } else {
        for (int i = 0; i < 3; ++i) {
          r[row] = sq_terminal_[i] * e[i];
          jac.row(row) = sq_terminal_[i] * sens.row(i);
          ++row;
        }
      }
      for (std::size_t i = 0; i < fc_.size(); ++i) {
        const int crow = collision_row0 + static_cast<int>(i) * (n_ + 1) + t;
        const Vec2 diff = x.position() - fc_.positions[i][static_cast<std::size_t>(t)];
        const double d = diff.norm();
        const double viol = p_.penalty_distance() + extra_radius(fc_, i, t) - d;
        if (viol <= 0.0) continue;
        r[crow] = sq_slack_ * viol;
        const Vec2 n = d > 1e-12 ? Vec2(diff / d) : Vec2(std::cos(x.theta), std::sin(x.theta));
        jac.row(crow) = -sq_slack_ * (n.x() * sens.row(0) + n.y() * sens.row(1));
      }
      if (t < n_) {
        const StepJacobian sj = rk4_step_jacobian(x, u[static_cast<std::size_t>(t)], p_.dt);
        sens = sj.wrt_state * sens;
        sens.middleCols(2 * t, 2) += sj.wrt_input;
      }
    }
    return r.squaredNorm();
  }

 private:
  const MpcProblem& p_;
  RobotState x0_;
  const ObstacleForecast& fc_;
  int n_;
  int rows_ = 0;
  Eigen::Vector3d sq_state_;
  Eigen::Vector2d sq_input_;
  Eigen::Vector3d sq_terminal_;
  double sq_slack_ = 0.0;
};

struct LocalResult {
  Eigen::VectorXd z;
  double cost = std::numeric_limits<double>::infinity();
  int iterations = 0;
  MpcStatus status = MpcStatus::Optimal;
  std::vector<double> history;
};

// Damped Gauss-Newton (Levenberg-Marquardt) with bound projection. A step is
// accepted only if it lowers the objective by a fraction of what the local
// model predicts, so accepted iterates never increase the objective.
LocalResult descend(const ResidualModel& model, const MpcProblem& problem, Eigen::VectorXd z,
                    Clock::time_point deadline) {
  LocalResult out;
  z = model.project(std::move(z));
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  double f = model.linearize(z, r, jac);
  out.history.push_back(f);
  out.status = MpcStatus::IterationLimit;
  if (!std::isfinite(f)) {
    out.z = z;
    out.cost = f;
    return out;
  }

  const int dim = model.dim();
  double lambda = 1e-3;
  for (int it = 0; it < problem.max_iters; ++it) {
    if (Clock::now() > deadline) {
      out.status = MpcStatus::BudgetExceeded;
      break;
    }
    const Eigen::VectorXd g = jac.transpose() * r;
    const Eigen::MatrixXd h = jac.transpose() * jac;

    std::vector<int> free;
    free.reserve(static_cast<std::size_t>(dim));
    for (int i = 0; i < dim; ++i) {
      const bool at_lo = z[i] <= model.lower(i) + 1e-12 && g[i] > 0.0;
      const bool at_hi = z[i] >= model.upper(i) - 1e-12 && g[i] < 0.0;
      if (!at_lo && !at_hi) free.push_back(i);
    }
    if (free.empty()) {
      out.status = MpcStatus::Optimal;
      break;
    }
    const auto nf = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd hf(nf, nf);
    Eigen::VectorXd gf(nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      gf[a] = g[free[a]];
      for (Eigen::Index b = 0; b < nf; ++b) hf(a, b) = h(free[a], free[b]);
    }
    const Eigen::VectorXd diag = hf.diagonal().array() + 1e-9 * (1.0 + hf.diagonal().maxCoeff());

    bool accepted = false;
    Eigen::VectorXd z_new;
    double f_new = f;
    while (lambda < 1e12) {
      Eigen::MatrixXd damped = hf;
      damped.diagonal() += lambda * diag;
      const Eigen::VectorXd df = damped.ldlt().solve(-gf);
      Eigen::VectorXd d = Eigen::VectorXd::Zero(dim);
      for (Eigen::Index a = 0; a < nf; ++a) d[free[a]] = df[a];
      z_new = model.project(z + d);
      const Eigen::VectorXd step = z_new - z;
      const double predicted = f - (r + jac * step).squaredNorm();
      if (d.allFinite() && predicted > 0.0) {
        f_new = model.cost(z_new);
        const double rho = (f - f_new) / predicted;
        if (std::isfinite(f_new) && f_new < f && rho > 1e-3) {
          lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
          lambda = std::max(lambda, 1e-9);
          accepted = true;
          break;
        }
      }
      lambda *= 4.0;
    }
    if (!accepted) {
      out.status = MpcStatus::Optimal;
      break;
    }

    const double step = (z_new - z).lpNorm<Eigen::Infinity>();
    const double decrease = f - f_new;
    z = std::move(z_new);
    ++out.iterations;
    f = model.linearize(z, r, jac);
    out.history.push_back(f);
    if (step < problem.tolerance || decrease <= problem.tolerance * (1.0 + f)) {
      out.status = MpcStatus::Optimal;
      break;
    }
  }
  out.z = std::move(z);
  out.cost = f;
  return out;
}

std::vector<Eigen::VectorXd> swerve_guesses(const MpcProblem& p) {
  std::vector<Eigen::VectorXd> out;
  const int turn_steps = std::max(1, p.horizon / 3);
  for (double side : {1.0, -1.0}) {
    Eigen::VectorXd z(2 * p.horizon);
    for (int t = 0; t < p.horizon; ++t) {
      z[2 * t] = 0.6 * p.limits.v.hi;
      z[2 * t + 1] = t < turn_steps ? side * 0.6 * p.limits.omega.hi : 0.0;
    }
    out.push_back(std::move(z));
  }
  return out;
}

}  // namespace

MpcSolution braking_fallback(const MpcProblem& problem, const RobotState& initial,
                             double current_speed) {
  MpcSolution sol;
  const double max_change = problem.limits.v.hi - problem.limits.v.lo;
  double v = current_speed;
  for (int t = 0; t < problem.horizon; ++t) {
    v = v > 0.0 ? std::max(0.0, v - max_change) : std::min(0.0, v + max_change);
    sol.controls.push_back(problem.limits.project({v, 0.0}));
  }
  sol.predicted_states = rollout(initial, sol.controls, problem.dt).states;
  sol.status = MpcStatus::InfeasibleFallback;
  sol.cost = std::numeric_limits<double>::infinity();
  return sol;
}

MpcSolution solve(const MpcProblem& problem, const RobotState& initial,
                  const ObstacleForecast& forecast, const MpcSolution* warm_start) {
  problem.validate();
  forecast.validate(problem.horizon);
  const auto start = Clock::now();
  const auto deadline =
      start + std::chrono::duration_cast<Clock::duration>(
                  std::chrono::duration<double>(problem.solve_budget));

  const ResidualModel model(problem, initial, forecast);
  std::vector<Eigen::VectorXd> guesses;
  if (warm_start && static_cast<int>(warm_start->controls.size()) == problem.horizon) {
    guesses.push_back(ResidualModel::to_vector(shift_controls(warm_start->controls)));
  } else {
    guesses.push_back(Eigen::VectorXd::Zero(2 * problem.horizon));
  }
  if (problem.swerve_seeds && forecast.size() > 0) {
    for (auto& g : swerve_guesses(problem)) guesses.push_back(std::move(g));
  }

  LocalResult best;
  int total_iterations = 0;
  bool budget_hit = false;
  for (std::size_t k = 0; k < guesses.size(); ++k) {
    if (k > 0 && Clock::now() > deadline) {
      budget_hit = true;
      break;
    }
    LocalResult local = descend(model, problem, guesses[k], deadline);
    total_iterations += local.iterations;
    budget_hit = budget_hit || local.status == MpcStatus::BudgetExceeded;
    if (k == 0 || local.cost < best.cost) best = std::move(local);
  }

  MpcSolution sol;
  if (!std::isfinite(best.cost)) {
    const double v0 = warm_start && !warm_start->controls.empty() ? warm_start->controls[0].v : 0.0;
    sol = braking_fallback(problem, initial, v0);
  } else {
    sol.controls = ResidualModel::to_controls(best.z);
    const RobotTrajectory traj = rollout(initial, sol.controls, problem.dt);
    sol.predicted_states = traj.states;
    sol.cost = best.cost;
    const PenaltyResult pen = collision_penalty(traj, forecast, problem);
    sol.max_constraint_violation = pen.max_violation;
    sol.max_penetration = pen.max_penetration;
    sol.status = budget_hit ? MpcStatus::BudgetExceeded : best.status;
    sol.objective_history = std::move(best.history);
  }
  sol.iterations = total_iterations;
  sol.solve_time = std::chrono::duration<double>(Clock::now() - start).count();
  return sol;
}

std::string to_string(RepresentativeStrategy strategy) {
  switch (strategy) {
    case RepresentativeStrategy::Mean: return "mean";
    case RepresentativeStrategy::Medoid: return "medoid";
    case RepresentativeStrategy::Inflated: return "inflated";
  }
  return "unknown";
}

RepresentativeStrategy representative_strategy_from_string(const std::string& text) {
  for (auto s : {RepresentativeStrategy::Mean, RepresentativeStrategy::Medoid,
                 RepresentativeStrategy::Inflated}) {
    if (to_string(s) == text) return s;
  }
  throw std::invalid_argument("unknown representative strategy '" + text + "'");
}

Representative select_representative(const PredictionSet& pred, RepresentativeStrategy strategy,
                                     double inflation_scale) {
  const int m = pred.num_samples();
  const int n = pred.horizon();
  Representative rep;
  if (m == 1) {
    rep.trajectory.assign(pred.sample(0).begin(), pred.sample(0).end());
    if (strategy == RepresentativeStrategy::Inflated) rep.extra_radius.assign(n, 0.0);
    return rep;
  }

  if (strategy == RepresentativeStrategy::Medoid) {
    int best = 0;
    double best_sum = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
      double sum = 0.0;
      for (int j = 0; j < m; ++j) {
        for (int t = 0; t < n; ++t) sum += (pred.at(i, t) - pred.at(j, t)).norm();
      }
      if (sum < best_sum) {
        best_sum = sum;
        best = i;
      }
    }
    rep.trajectory.assign(pred.sample(best).begin(), pred.sample(best).end());
    return rep;
  }

  rep.trajectory.assign(n, Vec2::Zero());
  for (int t = 0; t < n; ++t) {
    for (int i = 0; i < m; ++i) rep.trajectory[t] += pred.at(i, t);
    rep.trajectory[t] /= m;
  }
  if (strategy == RepresentativeStrategy::Inflated) {
    rep.extra_radius.resize(n);
    for (int t = 0; t < n; ++t) {
      const double lambda = max_eigenvalue(sample_covariance(pred, t));
      rep.extra_radius[t] = inflation_scale * std::sqrt(std::max(0.0, lambda));
    }
  }
  return rep;
}

}  // namespace crowdnav
