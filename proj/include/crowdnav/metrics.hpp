#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "crowdnav/prediction.hpp"
#include "crowdnav/simlog.hpp"

namespace crowdnav {

inline constexpr double kCovarianceEpsilon = 1e-6;  // [m^2]

// ---- open loop --------------------------------------------------------------

/// Mean Euclidean error over the horizon. Throws on length mismatch / empty.
double ade(std::span<const Vec2> pred, std::span<const Vec2> truth);
/// Euclidean error at the last step.
double fde(std::span<const Vec2> pred, std::span<const Vec2> truth);

/// Unbiased (M-1) 2x2 covariance of the samples at `step`.
Eigen::Matrix2d sample_covariance(const PredictionSet& set, int step);
/// Largest eigenvalue of a symmetric 2x2 matrix.
double max_eigenvalue(const Eigen::Matrix2d& sym);

/// Average Mahalanobis distance of the ground truth from every sample under
/// the per-step sample covariance (+ epsilon I). Needs M >= 2.
double amd(const PredictionSet& set, std::span<const Vec2> truth,
           double epsilon = kCovarianceEpsilon);
/// Mean over steps of lambda_max of the per-step sample covariance. Needs M >= 2.
double amv(const PredictionSet& set);

struct OpenLoopScores {
  double ade = 0.0;
  double fde = 0.0;
  double amd = 0.0;  // NaN when M < 2
  double amv = 0.0;  // NaN when M < 2
};

/// ADE/FDE averaged over samples (not best-of-M), plus AMD/AMV.
OpenLoopScores score_prediction(const PredictionSet& set, std::span<const Vec2> truth,
                                double epsilon = kCovarianceEpsilon);

/// One prediction to score against realised motion.
struct ScoringJob {
  const PredictionSet* set = nullptr;
  Path2 truth;
};

/// Per-job scores. The OpenMP variant returns identical values.
std::vector<OpenLoopScores> score_jobs_serial(std::span<const ScoringJob> jobs);
std::vector<OpenLoopScores> score_jobs_omp(std::span<const ScoringJob> jobs);

/// Arithmetic mean of scores; AMD/AMV average only their finite entries.
OpenLoopScores mean_scores(std::span<const OpenLoopScores> scores);

struct BucketScores {
  std::string predictor;
  int num_pedestrians = 0;
  OpenLoopScores scores;
  std::size_t samples = 0;  // number of (cycle, pedestrian) predictions scored
};

/// Scores every stored prediction whose full horizon of realised positions
/// is in the log and whose history had at least `min_observed` real
/// observations; averages per (predictor, pedestrian count). Throws
/// std::runtime_error when nothing is eligible.
std::vector<BucketScores> aggregate_open_loop(std::span<const SimLog> logs,
                                              int min_observed = 2);

/// Realised positions of pedestrian `ped_index` matching a stored prediction,
/// or nullopt if the log ends too early.
std::optional<Path2> realised_future(const SimLog& log, std::size_t ped_index,
                                     const StoredPrediction& pred);

// ---- closed loop ------------------------------------------------------------

struct MinDistanceResult {
  double surface = 0.0;      // min centre distance - (r_r + r_p); negative on overlap
  double center = 0.0;
  bool collision = false;
  std::vector<double> per_pedestrian_surface;
};

/// Throws std::invalid_argument for logs without pedestrians or cycles.
MinDistanceResult min_distance(const SimLog& log, double robot_radius, double ped_radius);

/// First logged time with |robot - goal| <= tol, or nullopt.
std::optional<double> time_to_goal(const SimLog& log, const Vec2& goal, double tol);

/// Central-difference acceleration, then central-difference jerk; returns the
/// mean |jerk|. Needs >= 4 samples (with exactly 4 the jerk series is a
/// single forward difference of the two accelerations).
double jerk(std::span<const double> speed, double dt);
/// Jerk of the applied linear velocity command.
double jerk(const SimLog& log);

/// Mean squared distance between the planner's one-step-ahead position and
/// the position realised at the next cycle. Throws if no plan is logged.
double mpc_mse(const SimLog& log);

/// Central-difference linear / angular accelerations of the applied commands.
struct AccelerationSample {
  double time = 0.0;
  double linear = 0.0;
  double angular = 0.0;
};
std::vector<AccelerationSample> acceleration_series(const SimLog& log);

struct ClosedLoopScores {
  double min_distance = 0.0;  // surface distance [m]
  double min_center_distance = 0.0;
  bool collision = false;
  std::optional<double> time_taken;
  double jerk = 0.0;
  double mpc_mse = 0.0;
};

ClosedLoopScores score_closed_loop(const SimLog& log);

}  // namespace crowdnav
