#include "crowdnav/prediction.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "crowdnav/rng.hpp"
#include "parallel.hpp"

namespace crowdnav {

PredictionSet::PredictionSet(int ped_id, int num_samples, int horizon, double dt_pred, Vec2 origin)
    : ped_id_(ped_id),
      num_samples_(num_samples),
      horizon_(horizon),
      dt_pred_(dt_pred),
      origin_(std::move(origin)) {
  if (num_samples < 1 || horizon < 1) {
    throw std::invalid_argument("PredictionSet: need at least one sample and one step");
  }
  points_.assign(static_cast<std::size_t>(num_samples) * horizon, Vec2::Zero());
}

bool PredictionSet::all_finite() const {
  return origin_.allFinite() &&
         std::all_of(points_.begin(), points_.end(), [](const Vec2& p) { return p.allFinite(); });
}

PedestrianHistory pad_history(std::span<const Vec2> raw, int history_length, int ped_id,
                              double dt_obs) {
  if (raw.empty()) throw std::invalid_argument("pad_history: empty observation sequence");
  if (history_length < 1) throw std::invalid_argument("pad_history: history_length must be >= 1");

  PedestrianHistory h;
  h.ped_id = ped_id;
  h.dt_obs = dt_obs;
  const auto n = static_cast<std::size_t>(history_length);
  if (raw.size() >= n) {
    h.positions.assign(raw.end() - static_cast<std::ptrdiff_t>(n), raw.end());
    h.observed_count = history_length;
  } else {
    h.positions.assign(n - raw.size(), raw.front());
    h.positions.insert(h.positions.end(), raw.begin(), raw.end());
    h.observed_count = static_cast<int>(raw.size());
  }
  return h;
}

namespace {

Vec2 last_displacement(const PedestrianHistory& history) {
  if (history.observed_count < 2 || history.positions.size() < 2) return Vec2::Zero();
  const auto n = history.positions.size();
  return history.positions[n - 1] - history.positions[n - 2];
}

void validate(const PedestrianHistory& history, int horizon) {
  if (horizon < 1) throw std::invalid_argument("predictor: horizon must be >= 1");
  if (history.positions.empty() || history.observed_count < 1) {
    throw std::invalid_argument("predictor: history has no observations");
  }
  if (!(history.dt_obs > 0.0)) throw std::invalid_argument("predictor: dt_obs must be > 0");
}

void extrapolate(std::span<Vec2> out, const Vec2& start, const Vec2& step) {
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = start + static_cast<double>(k + 1) * step;
  }
}

}  // namespace

PredictionSet predict_cv(const PedestrianHistory& history, int horizon) {
  validate(history, horizon);
  PredictionSet set(history.ped_id, 1, horizon, history.dt_obs, history.last());
  extrapolate(set.sample(0), history.last(), last_displacement(history));
  return set;
}

PredictionSet predict_cv_sampled(const PedestrianHistory& history, int horizon, int num_samples,
                                 double sigma_v, std::uint64_t seed) {
  validate(history, horizon);
  if (num_samples < 2) throw std::invalid_argument("predict_cv_sampled: need M >= 2");
  if (!(sigma_v >= 0.0)) throw std::invalid_argument("predict_cv_sampled: sigma_v must be >= 0");

  PredictionSet set(history.ped_id, num_samples, horizon, history.dt_obs, history.last());
  const Vec2 step = last_displacement(history);
  extrapolate(set.sample(0), history.last(), step);

  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int m = 1; m < num_samples; ++m) {
    Vec2 perturbed = step;
    if (sigma_v > 0.0) {
      const double dx = normal(rng);
      const double dy = normal(rng);
      perturbed += Vec2(dx, dy) * (sigma_v * history.dt_obs);
    }
    extrapolate(set.sample(m), history.last(), perturbed);
  }
  return set;
}

PredictionSet resample_to_grid(const PredictionSet& pred, double dt_target, int target_steps,
                               double time_offset) {
  if (pred.num_samples() < 1 || pred.horizon() < 1) {
    throw std::invalid_argument("resample_to_grid: empty prediction");
  }
  if (!(dt_target > 0.0) || target_steps < 1 || !(time_offset >= 0.0)) {
    throw std::invalid_argument("resample_to_grid: invalid target grid");
  }
  if (time_offset == 0.0 && dt_target == pred.dt_pred() && target_steps == pred.horizon()) {
    return pred;
  }

  const int n = pred.horizon();
  const double dt = pred.dt_pred();
  auto position_at = [&](std::span<const Vec2> path, double t) -> Vec2 {
    const double s = t / dt;
    if (s >= n) return path[n - 1];
    const int i = static_cast<int>(std::floor(s));
    const double frac = s - i;
    const Vec2& a = (i == 0) ? pred.origin() : path[i - 1];
    const Vec2& b = path[i];
    if (frac == 0.0) return a;
    return a + frac * (b - a);
  };

  // With a non-zero offset the samples no longer share a start point; sample 0
  // stands in for the set.
  const Vec2 origin = position_at(pred.sample(0), time_offset);
  PredictionSet out(pred.ped_id(), pred.num_samples(), target_steps, dt_target, origin);
  for (int m = 0; m < pred.num_samples(); ++m) {
    const auto path = pred.sample(m);
    for (int k = 0; k < target_steps; ++k) {
      out.at(m, k) = position_at(path, time_offset + (k + 1) * dt_target);
    }
  }
  return out;
}

CvPredictor::CvPredictor(CvPredictorConfig config) : config_(config) {
  if (config_.num_samples < 1 || config_.horizon < 1 || config_.history_length < 1) {
    throw std::invalid_argument("CvPredictor: invalid configuration");
  }
}

PredictionSet CvPredictor::predict(const PedestrianHistory& history, std::uint64_t cycle) const {
  if (config_.num_samples == 1) return predict_cv(history, config_.horizon);
  const auto seed = mix_seed({config_.seed, label_key("cv"),
                              static_cast<std::uint64_t>(history.ped_id), cycle});
  return predict_cv_sampled(history, config_.horizon, config_.num_samples, config_.sigma_v, seed);
}

std::vector<PredictionSet> predict_crowd_serial(const Predictor& predictor,
                                                std::span<const PedestrianHistory> histories,
                                                std::uint64_t cycle) {
  std::vector<PredictionSet> out;
  out.reserve(histories.size());
  for (const auto& h : histories) out.push_back(predictor.predict(h, cycle));
  return out;
}

std::vector<PredictionSet> predict_crowd_omp(const Predictor& predictor,
                                             std::span<const PedestrianHistory> histories,
                                             std::uint64_t cycle) {
  std::vector<PredictionSet> out(histories.size());
  detail::omp_for(static_cast<std::ptrdiff_t>(histories.size()),
                  [&](std::ptrdiff_t i) { out[i] = predictor.predict(histories[i], cycle); });
  return out;
}

}  // namespace crowdnav
