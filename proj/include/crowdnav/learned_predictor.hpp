#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "crowdnav/prediction.hpp"

namespace crowdnav {

/// Fully connected sampler: history displacements + noise -> N x 2 position
/// increments. Hidden layers use tanh, the output layer is linear.
///
/// Weights are stored layer by layer; each layer is a row-major
/// (out x in) matrix followed by its bias vector.
struct PredictorModel {
  std::vector<int> layer_sizes;
  std::vector<double> weights;
  int noise_dim = 0;
  int num_samples = kDefaultSamples;
  int horizon = kDefaultPredictionSteps;
  int history_length = kDefaultHistoryLength;
  double dt = kDefaultObservationDt;
  std::uint64_t rng_seed = 0;

  int input_dim() const { return 2 * (history_length - 1) + noise_dim; }
  int output_dim() const { return 2 * horizon; }
  std::size_t parameter_count() const { return weights.size(); }

  /// Throws std::invalid_argument if the shape fields and the weight count
  /// disagree.
  void validate() const;

  bool operator==(const PredictorModel&) const = default;
};

inline constexpr std::size_t kMaxPredictorParameters = 50'000;

/// Hidden widths only; input and output widths follow from the history
/// length, noise dimension and horizon.
struct ModelShape {
  std::vector<int> hidden = {56, 56};
  int noise_dim = 4;
  int num_samples = kDefaultSamples;
  int horizon = kDefaultPredictionSteps;
  int history_length = kDefaultHistoryLength;
  double dt = kDefaultObservationDt;
};

std::size_t parameter_count(std::span<const int> layer_sizes);

/// Glorot-uniform weights, zero biases.
PredictorModel make_model(const ModelShape& shape, std::uint64_t seed);
PredictorModel make_zero_model(const ModelShape& shape);

/// History displacement features, oldest first (2 * (N_h - 1) values).
std::vector<double> history_features(const PredictorModel& model,
                                     const PedestrianHistory& history);

/// One sampled future for one pedestrian.
Path2 si_forward(const PredictorModel& model, const PedestrianHistory& history,
                 std::span<const double> noise);

/// M futures with noise drawn from a standard normal stream seeded by `seed`.
PredictionSet predict_learned(const PredictorModel& model, const PedestrianHistory& history,
                              std::uint64_t seed);
/// Same, seeded by model.rng_seed.
PredictionSet predict_learned(const PredictorModel& model, const PedestrianHistory& history);

/// K noise vectors of length noise_dim from a seeded standard normal stream.
std::vector<std::vector<double>> draw_noise(int count, int noise_dim, std::uint64_t seed);

struct ImleResult {
  double loss = 0.0;
  int selected = 0;
};

/// Mean squared distance between a future and the ground truth.
double trajectory_mse(std::span<const Vec2> predicted, std::span<const Vec2> truth);

/// min over K noise draws of trajectory_mse(si_forward(...), truth).
ImleResult imle_loss(const PredictorModel& model, const PedestrianHistory& history,
                     std::span<const Vec2> truth, int draws, std::uint64_t seed);

/// Gradient of trajectory_mse(si_forward(model, history, noise), truth) with
/// respect to all weights, accumulated into `grad`. Returns the loss.
double accumulate_gradient(const PredictorModel& model, const PedestrianHistory& history,
                           std::span<const double> noise, std::span<const Vec2> truth,
                           std::span<double> grad);

struct TrainingExample {
  PedestrianHistory history;
  Path2 future;
};

struct TrainingConfig {
  double learning_rate = 0.02;
  int imle_draws = 2;
  int epochs = 150;
  int batch_size = 32;
  int early_stop_patience = 30;
  double validation_fraction = 0.2;

  void validate() const;
};

struct BatchGradient {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Mean IMLE loss and its gradient over a batch. Example i uses noise seeded
/// by mix(seed, i). Both variants produce bit-identical results: the OpenMP
/// one computes per-example gradients in parallel and reduces them in index
/// order.
BatchGradient batch_gradient_serial(const PredictorModel& model,
                                    std::span<const TrainingExample> batch, int draws,
                                    std::uint64_t seed);
BatchGradient batch_gradient_omp(const PredictorModel& model,
                                 std::span<const TrainingExample> batch, int draws,
                                 std::uint64_t seed);

/// One gradient-descent step on the batch IMLE loss. Returns the pre-update
/// batch loss. Throws std::runtime_error if the loss is not finite.
double train_step(PredictorModel& model, std::span<const TrainingExample> batch,
                  const TrainingConfig& config, std::uint64_t seed);

/// Mean IMLE loss over a data set with per-example seeds derived from `seed`.
double evaluation_loss(const PredictorModel& model, std::span<const TrainingExample> data,
                       int draws, std::uint64_t seed);

struct TrainingReport {
  std::vector<double> train_loss;       // per epoch, entry 0 = before training
  std::vector<double> validation_loss;  // per epoch, entry 0 = before training
  int best_epoch = 0;
  int epochs_run = 0;
  bool early_stopped = false;
  std::size_t parameter_count = 0;
  std::size_t train_size = 0;
  std::size_t validation_size = 0;
};

/// Trains with early stopping on the validation IMLE loss; `model` ends at
/// the best validation epoch. Throws std::invalid_argument when the data set
/// cannot be split into non-empty train/validation parts.
TrainingReport train(PredictorModel& model, std::span<const TrainingExample> data,
                     const TrainingConfig& config, std::uint64_t seed);

void save_model(const PredictorModel& model, const std::filesystem::path& path);
PredictorModel load_model(const std::filesystem::path& path);

class LearnedPredictor final : public Predictor {
 public:
  LearnedPredictor(PredictorModel model, std::uint64_t seed);

  PredictionSet predict(const PedestrianHistory& history, std::uint64_t cycle) const override;
  std::string name() const override { return "learned"; }
  int history_length() const override { return model_.history_length; }
  int horizon() const override { return model_.horizon; }
  double dt() const override { return model_.dt; }
  const PredictorModel& model() const { return model_; }

 private:
  PredictorModel model_;
  std::uint64_t seed_;
};

}  // namespace crowdnav
