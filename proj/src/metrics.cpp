#include "crowdnav/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "parallel.hpp"

namespace crowdnav {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_pair(std::span<const Vec2> pred, std::span<const Vec2> truth) {
  if (pred.size() != truth.size()) throw std::invalid_argument("metric: length mismatch");
  if (truth.empty()) throw std::invalid_argument("metric: empty trajectory");
}

void check_spread(const PredictionSet& set) {
  if (set.num_samples() < 2) {
    throw std::invalid_argument("metric: covariance needs at least two samples");
  }
}

}  // namespace

double ade(std::span<const Vec2> pred, std::span<const Vec2> truth) {
  check_pair(pred, truth);
  double sum = 0.0;
  for (std::size_t t = 0; t < truth.size(); ++t) sum += (pred[t] - truth[t]).norm();
  return sum / static_cast<double>(truth.size());
}

double fde(std::span<const Vec2> pred, std::span<const Vec2> truth) {
  check_pair(pred, truth);
  return (pred.back() - truth.back()).norm();
}

Eigen::Matrix2d sample_covariance(const PredictionSet& set, int step) {
  check_spread(set);
  const int m = set.num_samples();
  Vec2 mean = Vec2::Zero();
  for (int i = 0; i < m; ++i) mean += set.at(i, step);
  mean /= m;
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (int i = 0; i < m; ++i) {
    const Vec2 d = set.at(i, step) - mean;
    cov += d * d.transpose();
  }
  return cov / (m - 1);
}

double max_eigenvalue(const Eigen::Matrix2d& s) {
  const double half_trace = 0.5 * (s(0, 0) + s(1, 1));
  const double half_diff = 0.5 * (s(0, 0) - s(1, 1));
  const double off = 0.5 * (s(0, 1) + s(1, 0));
  return half_trace + std::hypot(half_diff, off);
}

double amd(const PredictionSet& set, std::span<const Vec2> truth, double epsilon) {
  check_spread(set);
  if (static_cast<int>(truth.size()) != set.horizon()) {
    throw std::invalid_argument("amd: ground truth length does not match the horizon");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("amd: epsilon must be > 0");
  const int m = set.num_samples();
  const int n = set.horizon();
  double sum = 0.0;
  for (int t = 0; t < n; ++t) {
    const Eigen::Matrix2d cov = sample_covariance(set, t);
    const double a = cov(0, 0) + epsilon;
    const double b = cov(0, 1);
    const double c = cov(1, 1) + epsilon;
    const double det = a * c - b * b;
    if (!(det > 0.0)) throw std::runtime_error("amd: singular covariance");
    for (int i = 0; i < m; ++i) {
      const Vec2 d = set.at(i, t) - truth[t];
      const double q = (c * d.x() * d.x() - 2.0 * b * d.x() * d.y() + a * d.y() * d.y()) / det;
      sum += std::sqrt(std::max(q, 0.0));
    }
  }
  return sum / (static_cast<double>(m) * n);
}

double amv(const PredictionSet& set) {
  check_spread(set);
  double sum = 0.0;
  for (int t = 0; t < set.horizon(); ++t) sum += max_eigenvalue(sample_covariance(set, t));
  return sum / set.horizon();
}

OpenLoopScores score_prediction(const PredictionSet& set, std::span<const Vec2> truth,
                                double epsilon) {
  if (static_cast<int>(truth.size()) != set.horizon()) {
    throw std::invalid_argument("score_prediction: ground truth length mismatch");
  }
  OpenLoopScores s;
  for (int m = 0; m < set.num_samples(); ++m) {
    s.ade += ade(set.sample(m), truth);
    s.fde += fde(set.sample(m), truth);
  }
  s.ade /= set.num_samples();
  s.fde /= set.num_samples();
  if (set.num_samples() >= 2) {
    s.amd = amd(set, truth, epsilon);
    s.amv = amv(set);
  } else {
    s.amd = kNaN;
    s.amv = kNaN;
  }
  return s;
}

std::vector<OpenLoopScores> score_jobs_serial(std::span<const ScoringJob> jobs) {
  std::vector<OpenLoopScores> out;
  out.reserve(jobs.size());
  for (const auto& job : jobs) out.push_back(score_prediction(*job.set, job.truth));
  return out;
}

std::vector<OpenLoopScores> score_jobs_omp(std::span<const ScoringJob> jobs) {
  std::vector<OpenLoopScores> out(jobs.size());
  detail::omp_for(static_cast<std::ptrdiff_t>(jobs.size()), [&](std::ptrdiff_t i) {
    out[i] = score_prediction(*jobs[i].set, jobs[i].truth);
  });
  return out;
}

OpenLoopScores mean_scores(std::span<const OpenLoopScores> scores) {
  OpenLoopScores mean;
  if (scores.empty()) return {kNaN, kNaN, kNaN, kNaN};
  std::size_t spread_count = 0;
  for (const auto& s : scores) {
    mean.ade += s.ade;
    mean.fde += s.fde;
    if (std::isfinite(s.amd) && std::isfinite(s.amv)) {
      mean.amd += s.amd;
      mean.amv += s.amv;
      ++spread_count;
    }
  }
  mean.ade /= static_cast<double>(scores.size());
  mean.fde /= static_cast<double>(scores.size());
  mean.amd = spread_count ? mean.amd / static_cast<double>(spread_count) : kNaN;
  mean.amv = spread_count ? mean.amv / static_cast<double>(spread_count) : kNaN;
  return mean;
}

std::optional<Path2> realised_future(const SimLog& log, std::size_t ped_index,
                                     const StoredPrediction& pred) {
  const double ratio = pred.set.dt_pred() / log.dt;
  const auto stride = std::lround(ratio);
  if (stride < 1 || std::abs(ratio - static_cast<double>(stride)) > 1e-9) {
    throw std::runtime_error("realised_future: prediction period is not a multiple of dt");
  }
  Path2 truth;
  truth.reserve(static_cast<std::size_t>(pred.set.horizon()));
  for (int k = 1; k <= pred.set.horizon(); ++k) {
    const long c = pred.anchor_cycle + k * stride;
    if (c < 0 || c >= static_cast<long>(log.cycles.size())) return std::nullopt;
    truth.push_back(log.cycles[static_cast<std::size_t>(c)].pedestrians.at(ped_index));
  }
  return truth;
}

std::vector<BucketScores> aggregate_open_loop(std::span<const SimLog> logs, int min_observed) {
  std::map<std::pair<std::string, int>, std::vector<ScoringJob>> buckets;
  for (const auto& log : logs) {
    auto& jobs = buckets[{log.predictor, log.num_pedestrians()}];
    for (const auto& rec : log.cycles) {
      for (const auto& p : rec.predictions) {
        if (p.observed_count < min_observed) continue;
        const auto it = std::find(log.ped_ids.begin(), log.ped_ids.end(), p.set.ped_id());
        if (it == log.ped_ids.end()) {
          throw std::runtime_error("aggregate_open_loop: prediction for unknown pedestrian");
        }
        auto truth = realised_future(log, static_cast<std::size_t>(it - log.ped_ids.begin()), p);
        if (!truth) continue;
        jobs.push_back({&p.set, std::move(*truth)});
      }
    }
  }

  std::vector<BucketScores> out;
  for (const auto& [key, jobs] : buckets) {
    if (jobs.empty()) continue;
    const auto scores = score_jobs_omp(jobs);
    out.push_back({key.first, key.second, mean_scores(scores), jobs.size()});
  }
  if (out.empty()) throw std::runtime_error("aggregate_open_loop: no eligible cycles");
  return out;
}

MinDistanceResult min_distance(const SimLog& log, double robot_radius, double ped_radius) {
  if (log.ped_ids.empty()) throw std::invalid_argument("min_distance: log has no pedestrians");
  if (log.cycles.empty()) throw std::invalid_argument("min_distance: empty log");
  const double safe = robot_radius + ped_radius;
  MinDistanceResult r;
  r.center = std::numeric_limits<double>::infinity();
  r.per_pedestrian_surface.assign(log.ped_ids.size(), std::numeric_limits<double>::infinity());
  for (const auto& rec : log.cycles) {
    for (std::size_t i = 0; i < rec.pedestrians.size(); ++i) {
      const double d = (rec.robot.position() - rec.pedestrians[i]).norm();
      r.center = std::min(r.center, d);
      r.per_pedestrian_surface[i] = std::min(r.per_pedestrian_surface[i], d - safe);
    }
  }
  r.surface = r.center - safe;
  r.collision = r.center < safe;
  return r;
}

std::optional<double> time_to_goal(const SimLog& log, const Vec2& goal, double tol) {
  for (const auto& rec : log.cycles) {
    if ((rec.robot.position() - goal).norm() <= tol) return rec.time;
  }
  return std::nullopt;
}

double jerk(std::span<const double> speed, double dt) {
  if (speed.size() < 4) throw std::invalid_argument("jerk: need at least 4 samples");
  if (!(dt > 0.0)) throw std::invalid_argument("jerk: dt must be > 0");
  std::vector<double> acc;
  acc.reserve(speed.size() - 2);
  for (std::size_t i = 1; i + 1 < speed.size(); ++i) {
    acc.push_back((speed[i + 1] - speed[i - 1]) / (2.0 * dt));
  }
  if (acc.size() == 2) return std::abs(acc[1] - acc[0]) / dt;
  double sum = 0.0;
  for (std::size_t i = 1; i + 1 < acc.size(); ++i) {
    sum += std::abs((acc[i + 1] - acc[i - 1]) / (2.0 * dt));
  }
  return sum / static_cast<double>(acc.size() - 2);
}

namespace {

std::vector<ControlInput> applied_controls(const SimLog& log) {
  std::vector<ControlInput> out;
  for (const auto& rec : log.cycles) {
    if (rec.control) out.push_back(*rec.control);
  }
  return out;
}

}  // namespace

double jerk(const SimLog& log) {
  std::vector<double> v;
  for (const auto& u : applied_controls(log)) v.push_back(u.v);
  return jerk(v, log.dt);
}

double mpc_mse(const SimLog& log) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t c = 0; c + 1 < log.cycles.size(); ++c) {
    const auto& rec = log.cycles[c];
    if (!rec.solve) continue;
    const Vec2 planned = rec.solve->plan_next.position();
    sum += (planned - log.cycles[c + 1].robot.position()).squaredNorm();
    ++count;
  }
  if (count == 0) throw std::runtime_error("mpc_mse: log holds no plan records");
  return sum / static_cast<double>(count);
}

std::vector<AccelerationSample> acceleration_series(const SimLog& log) {
  std::vector<AccelerationSample> out;
  std::vector<double> times;
  std::vector<ControlInput> u;
  for (const auto& rec : log.cycles) {
    if (rec.control) {
      times.push_back(rec.time);
      u.push_back(*rec.control);
    }
  }
  for (std::size_t i = 1; i + 1 < u.size(); ++i) {
    out.push_back({times[i], (u[i + 1].v - u[i - 1].v) / (2.0 * log.dt),
                   (u[i + 1].omega - u[i - 1].omega) / (2.0 * log.dt)});
  }
  return out;
}

ClosedLoopScores score_closed_loop(const SimLog& log) {
  ClosedLoopScores s;
  if (!log.ped_ids.empty()) {
    const auto md = min_distance(log, log.robot_radius, log.ped_radius);
    s.min_distance = md.surface;
    s.min_center_distance = md.center;
    s.collision = md.collision;
  } else {
    s.min_distance = s.min_center_distance = std::numeric_limits<double>::infinity();
  }
  if (log.verdict == Verdict::GoalReached) {
    s.time_taken = time_to_goal(log, log.goal, log.goal_tolerance);
  }
  const auto controls = applied_controls(log);
  s.jerk = controls.size() >= 4 ? jerk(log) : kNaN;
  const bool has_plan = std::any_of(log.cycles.begin(), log.cycles.end(),
                                    [](const CycleRecord& r) { return r.solve.has_value(); });
  s.mpc_mse = has_plan && log.cycles.size() >= 2 ? mpc_mse(log) : kNaN;
  return s;
}

}  // namespace crowdnav
