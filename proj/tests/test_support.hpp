#pragma once

// Helpers and brute-force reference implementations shared by the tests.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "crowdnav/metrics.hpp"
#include "crowdnav/mpc.hpp"
#include "crowdnav/prediction.hpp"
#include "crowdnav/simlog.hpp"

namespace crowdnav::testing {

inline Path2 random_path(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> d(0.0, 2.0);
  Path2 p;
  for (int i = 0; i < n; ++i) p.emplace_back(d(rng), d(rng));
  return p;
}

inline PredictionSet random_set(std::mt19937_64& rng, int m, int n) {
  std::normal_distribution<double> d(0.0, 1.0);
  PredictionSet s(0, m, n, 0.4, Vec2::Zero());
  for (int t = 0; t < n; ++t) {
    const Vec2 centre(3.0 * d(rng), 3.0 * d(rng));
    const double sx = 0.05 + std::abs(d(rng));
    const double sy = 0.05 + std::abs(d(rng));
    for (int i = 0; i < m; ++i) s.at(i, t) = centre + Vec2(sx * d(rng), sy * d(rng));
  }
  return s;
}

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

// Straight from the definitions: per-sample displacement errors averaged over
// samples, full Eigen covariance, inverse and eigen-decomposition.
inline OpenLoopScores oracle_scores(const PredictionSet& s, const Path2& truth, double eps) {
  const int m = s.num_samples();
  const int n = s.horizon();
  OpenLoopScores out;
  for (int i = 0; i < m; ++i) {
    double a = 0.0;
    for (int t = 0; t < n; ++t) a += (s.at(i, t) - truth[t]).norm();
    out.ade += a / n;
    out.fde += (s.at(i, n - 1) - truth[n - 1]).norm();
  }
  out.ade /= m;
  out.fde /= m;
  double amd_sum = 0.0;
  double amv_sum = 0.0;
  for (int t = 0; t < n; ++t) {
    Eigen::MatrixXd x(m, 2);
    for (int i = 0; i < m; ++i) x.row(i) = s.at(i, t).transpose();
    const Eigen::MatrixXd centred = x.rowwise() - x.colwise().mean();
    const Eigen::Matrix2d cov = centred.transpose() * centred / (m - 1);
    amv_sum += Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(cov).eigenvalues().maxCoeff();
    const Eigen::Matrix2d inv = (cov + eps * Eigen::Matrix2d::Identity()).inverse();
    for (int i = 0; i < m; ++i) {
      const Vec2 d = s.at(i, t) - truth[t];
      amd_sum += std::sqrt(d.dot(inv * d));
    }
  }
  out.amd = amd_sum / (static_cast<double>(m) * n);
  out.amv = amv_sum / n;
  return out;
}

inline SimLog empty_log(int peds) {
  SimLog log;
  log.scenario = "test";
  log.predictor = "cv";
  for (int i = 0; i < peds; ++i) log.ped_ids.push_back(i);
  return log;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "crowdnav_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Robot at the origin facing +x, goal 3 m ahead, one pedestrian standing 1 m
// ahead on the straight line.
struct ObstacleInstance {
  MpcProblem problem;
  RobotState initial;
  ObstacleForecast forecast;
};

inline ObstacleInstance stationary_obstacle(double slack_weight = 1e3) {
  ObstacleInstance s;
  s.problem.goal = {3.0, 0.0, 0.0};
  s.problem.slack_weight = slack_weight;
  s.problem.solve_budget = 10.0;
  s.problem.max_iters = 200;
  const auto points = static_cast<std::size_t>(s.problem.horizon + 1);
  s.forecast.positions.push_back(Path2(points, Vec2(1.0, 0.0)));
  return s;
}

// Small hand-built log: the robot accelerates along +x to a goal 3 m away,
// pedestrians walk uniformly along +x, and stored predictions are the true
// futures with samples offset by +-spread in y.
inline SimLog canned_log(const std::string& scenario, const std::string& predictor, int peds,
                  double spread, double plan_offset) {
  SimLog log;
  log.scenario = scenario;
  log.predictor = predictor;
  log.seed = 7;
  log.goal = {3.0, 0.0};
  for (int j = 0; j < peds; ++j) log.ped_ids.push_back(j);
  auto ped_at = [](int j, int k) { return Vec2(-2.0 + 0.1 * k, 1.0 + j); };

  double x = 0.0;
  for (int k = 0;; ++k) {
    CycleRecord r;
    r.cycle = k;
    r.time = 0.1 * k;
    r.robot = {x, 0.0, 0.0};
    for (int j = 0; j < peds; ++j) r.pedestrians.push_back(ped_at(j, k));
    if (k % 4 == 0 && k >= 4) {
      for (int j = 0; j < peds; ++j) {
        StoredPrediction sp;
        sp.anchor_cycle = k;
        sp.observed_count = k / 4 + 1;
        sp.set = PredictionSet(j, 2, 3, 0.4, ped_at(j, k));
        for (int t = 0; t < 3; ++t) {
          sp.set.at(0, t) = ped_at(j, k + 4 * (t + 1)) + Vec2(0.0, spread);
          sp.set.at(1, t) = ped_at(j, k + 4 * (t + 1)) - Vec2(0.0, spread);
        }
        r.predictions.push_back(sp);
      }
    }
    if (std::abs(x - 3.0) <= log.goal_tolerance) {
      log.cycles.push_back(r);
      break;
    }
    const double v = std::min(1.0, 0.25 + 0.05 * k);
    r.control = ControlInput{v, 0.0};
    SolveSummary s;
    s.cost = 1.0 / (k + 1);
    s.iterations = 3;
    s.plan_next = {x + v * 0.1, plan_offset, 0.0};
    r.solve = s;
    log.cycles.push_back(r);
    x += v * 0.1;
  }
  log.verdict = Verdict::GoalReached;
  return log;
}

inline std::vector<SimLog> canned_set() {
  return {canned_log("canned1", "cv", 1, 0.2, 0.0), canned_log("canned1", "learned", 1, 0.1, 0.01),
          canned_log("canned2", "cv", 2, 0.3, 0.0), canned_log("canned2", "learned", 2, 0.1, 0.02)};
}

inline std::filesystem::path golden_dir() { return std::filesystem::path(CROWDNAV_TEST_DATA) / "golden"; }

}  // namespace crowdnav::testing
