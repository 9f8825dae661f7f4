#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "crowdnav/dynamics.hpp"

namespace crowdnav {

using Path2 = std::vector<Vec2>;

inline constexpr int kDefaultHistoryLength = 8;
inline constexpr int kDefaultPredictionSteps = 12;
inline constexpr double kDefaultObservationDt = 0.4;
inline constexpr int kDefaultSamples = 20;
inline constexpr double kDefaultCvSigma = 0.1;

/// Fixed-length window of past positions, oldest first. Entries before the
/// first real observation repeat that observation.
struct PedestrianHistory {
  int ped_id = 0;
  Path2 positions;
  int observed_count = 0;
  double dt_obs = kDefaultObservationDt;

  int length() const { return static_cast<int>(positions.size()); }
  const Vec2& last() const { return positions.back(); }
};

/// M sampled futures of N steps for one pedestrian, sample-major.
/// Step k of every sample is at time k * dt_pred after the observation the
/// set was conditioned on; `origin` is the position at time 0.
class PredictionSet {
 public:
  PredictionSet() = default;
  PredictionSet(int ped_id, int num_samples, int horizon, double dt_pred, Vec2 origin);

  int ped_id() const { return ped_id_; }
  int num_samples() const { return num_samples_; }
  int horizon() const { return horizon_; }
  double dt_pred() const { return dt_pred_; }
  const Vec2& origin() const { return origin_; }

  Vec2& at(int sample, int step) { return points_[index(sample, step)]; }
  const Vec2& at(int sample, int step) const { return points_[index(sample, step)]; }

  std::span<const Vec2> sample(int m) const {
    return {points_.data() + static_cast<std::size_t>(m) * horizon_,
            static_cast<std::size_t>(horizon_)};
  }
  std::span<Vec2> sample(int m) {
    return {points_.data() + static_cast<std::size_t>(m) * horizon_,
            static_cast<std::size_t>(horizon_)};
  }
  const std::vector<Vec2>& points() const { return points_; }

  bool all_finite() const;
  bool operator==(const PredictionSet&) const = default;

 private:
  std::size_t index(int m, int t) const {
    return static_cast<std::size_t>(m) * horizon_ + static_cast<std::size_t>(t);
  }

  int ped_id_ = 0;
  int num_samples_ = 0;
  int horizon_ = 0;
  double dt_pred_ = kDefaultObservationDt;
  Vec2 origin_ = Vec2::Zero();
  std::vector<Vec2> points_;
};

/// Keeps the last `history_length` points or left-pads with raw[0].
/// Throws std::invalid_argument on empty input or history_length < 1.
PedestrianHistory pad_history(std::span<const Vec2> raw, int history_length, int ped_id = 0,
                              double dt_obs = kDefaultObservationDt);

/// Constant-velocity extrapolation of the last displacement; a single
/// observation is treated as standing still.
PredictionSet predict_cv(const PedestrianHistory& history, int horizon);

/// CV with the velocity of samples 1..M-1 perturbed by isotropic Gaussian
/// noise of std sigma_v [m/s]. Sample 0 is the plain CV prediction.
PredictionSet predict_cv_sampled(const PedestrianHistory& history, int horizon, int num_samples,
                                 double sigma_v, std::uint64_t seed);

/// Linear interpolation of every sample onto the grid
/// time_offset + k * dt_target, k = 1..target_steps. Times past the
/// prediction horizon hold the last point. The returned set's origin is the
/// interpolated position at time_offset.
PredictionSet resample_to_grid(const PredictionSet& pred, double dt_target, int target_steps,
                               double time_offset = 0.0);

/// Pluggable predictor contract. Implementations are immutable and
/// thread-safe; randomness is keyed by (seed, ped_id, cycle).
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual PredictionSet predict(const PedestrianHistory& history, std::uint64_t cycle) const = 0;
  virtual std::string name() const = 0;
  virtual int history_length() const = 0;
  virtual int horizon() const = 0;
  virtual double dt() const = 0;
};

struct CvPredictorConfig {
  int history_length = kDefaultHistoryLength;
  int horizon = kDefaultPredictionSteps;
  int num_samples = kDefaultSamples;
  double dt = kDefaultObservationDt;
  double sigma_v = kDefaultCvSigma;
  std::uint64_t seed = 0;
};

class CvPredictor final : public Predictor {
 public:
  explicit CvPredictor(CvPredictorConfig config);

  PredictionSet predict(const PedestrianHistory& history, std::uint64_t cycle) const override;
  std::string name() const override { return "cv"; }
  int history_length() const override { return config_.history_length; }
  int horizon() const override { return config_.horizon; }
  double dt() const override { return config_.dt; }
  const CvPredictorConfig& config() const { return config_; }

 private:
  CvPredictorConfig config_;
};

/// Runs `predictor` over every history. The OpenMP variant distributes
/// pedestrians over threads; both return identical results.
std::vector<PredictionSet> predict_crowd_serial(const Predictor& predictor,
                                                std::span<const PedestrianHistory> histories,
                                                std::uint64_t cycle);
std::vector<PredictionSet> predict_crowd_omp(const Predictor& predictor,
                                             std::span<const PedestrianHistory> histories,
                                             std::uint64_t cycle);

}  // namespace crowdnav
