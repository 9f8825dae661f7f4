#include "crowdnav/learned_predictor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <Eigen/Core>

#include "crowdnav/rng.hpp"
#include "parallel.hpp"

namespace crowdnav {

namespace {

using RowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using RowMajorMutMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// Activations of every layer for one forward pass; acts[0] is the input.
struct ForwardCache {
  std::vector<Eigen::VectorXd> acts;
};

Eigen::VectorXd assemble_input(const PredictorModel& model, const PedestrianHistory& history,
                               std::span<const double> noise) {
  if (history.length() != model.history_length) {
    throw std::invalid_argument("learned predictor: history length does not match the model");
  }
  if (static_cast<int>(noise.size()) != model.noise_dim) {
    throw std::invalid_argument("learned predictor: noise length does not match noise_dim");
  }
  Eigen::VectorXd input(model.input_dim());
  int k = 0;
  for (int i = 0; i + 1 < history.length(); ++i) {
    const Vec2 d = history.positions[i + 1] - history.positions[i];
    input[k++] = d.x();
    input[k++] = d.y();
  }
  for (double z : noise) input[k++] = z;
  return input;
}

Eigen::VectorXd forward(const PredictorModel& model, const Eigen::VectorXd& input,
                        ForwardCache* cache) {
  const auto& sizes = model.layer_sizes;
  const std::size_t layers = sizes.size() - 1;
  Eigen::VectorXd a = input;
  if (cache) {
    cache->acts.clear();
    cache->acts.push_back(a);
  }
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    const int in = sizes[l];
    const int out = sizes[l + 1];
    RowMajorMap w(model.weights.data() + offset, out, in);
    offset += static_cast<std::size_t>(in) * out;
    Eigen::Map<const Eigen::VectorXd> b(model.weights.data() + offset, out);
    offset += out;
    Eigen::VectorXd z = w * a + b;
    if (l + 1 < layers) z = z.array().tanh();
    a = std::move(z);
    if (cache) cache->acts.push_back(a);
  }
  return a;
}

void backward(const PredictorModel& model, const ForwardCache& cache, Eigen::VectorXd delta,
              std::span<double> grad) {
  const auto& sizes = model.layer_sizes;
  const std::size_t layers = sizes.size() - 1;

  std::vector<std::size_t> offsets(layers);
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    offsets[l] = offset;
    offset += static_cast<std::size_t>(sizes[l]) * sizes[l + 1] + sizes[l + 1];
  }

  for (std::size_t l = layers; l-- > 0;) {
    const int in = sizes[l];
    const int out = sizes[l + 1];
    const Eigen::VectorXd& a_in = cache.acts[l];
    RowMajorMutMap gw(grad.data() + offsets[l], out, in);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + offsets[l] + static_cast<std::size_t>(in) * out,
                                   out);
    gw.noalias() += delta * a_in.transpose();
    gb += delta;
    if (l > 0) {
      RowMajorMap w(model.weights.data() + offsets[l], out, in);
      Eigen::VectorXd prev = w.transpose() * delta;
      delta = prev.array() * (1.0 - a_in.array().square());
    }
  }
}

Path2 increments_to_positions(const Vec2& start, const Eigen::VectorXd& increments) {
  const int n = static_cast<int>(increments.size() / 2);
  Path2 out(n);
  Vec2 p = start;
  for (int t = 0; t < n; ++t) {
    p += Vec2(increments[2 * t], increments[2 * t + 1]);
    out[t] = p;
  }
  return out;
}

}  // namespace

std::size_t parameter_count(std::span<const int> layer_sizes) {
  std::size_t count = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    count += static_cast<std::size_t>(layer_sizes[l]) * layer_sizes[l + 1] + layer_sizes[l + 1];
  }
  return count;
}

void PredictorModel::validate() const {
  if (history_length < 2 || horizon < 1 || num_samples < 1 || noise_dim < 0 || !(dt > 0.0)) {
    throw std::invalid_argument("PredictorModel: invalid shape fields");
  }
  if (layer_sizes.size() < 2) throw std::invalid_argument("PredictorModel: need >= 2 layers");
  if (std::any_of(layer_sizes.begin(), layer_sizes.end(), [](int s) { return s < 1; })) {
    throw std::invalid_argument("PredictorModel: layer sizes must be positive");
  }
  if (layer_sizes.front() != input_dim() || layer_sizes.back() != output_dim()) {
    throw std::invalid_argument("PredictorModel: input/output widths do not match the shape");
  }
  if (weights.size() != crowdnav::parameter_count(layer_sizes)) {
    throw std::invalid_argument("PredictorModel: weight count does not match layer sizes");
  }
}

namespace {

PredictorModel shaped(const ModelShape& shape) {
  PredictorModel m;
  m.noise_dim = shape.noise_dim;
  m.num_samples = shape.num_samples;
  m.horizon = shape.horizon;
  m.history_length = shape.history_length;
  m.dt = shape.dt;
  m.layer_sizes.push_back(m.input_dim());
  m.layer_sizes.insert(m.layer_sizes.end(), shape.hidden.begin(), shape.hidden.end());
  m.layer_sizes.push_back(m.output_dim());
  m.weights.assign(crowdnav::parameter_count(m.layer_sizes), 0.0);
  return m;
}

}  // namespace

PredictorModel make_zero_model(const ModelShape& shape) {
  PredictorModel m = shaped(shape);
  m.validate();
  return m;
}

PredictorModel make_model(const ModelShape& shape, std::uint64_t seed) {
  PredictorModel m = shaped(shape);
  m.rng_seed = seed;
  Rng rng(mix_seed({seed, label_key("init")}));
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < m.layer_sizes.size(); ++l) {
    const int in = m.layer_sizes[l];
    const int out = m.layer_sizes[l + 1];
    const double limit = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> uniform(-limit, limit);
    for (int i = 0; i < in * out; ++i) m.weights[offset + i] = uniform(rng);
    offset += static_cast<std::size_t>(in) * out + out;
  }
  m.validate();
  return m;
}

std::vector<double> history_features(const PredictorModel& model,
                                     const PedestrianHistory& history) {
  const Eigen::VectorXd input = assemble_input(
      model, history, std::vector<double>(static_cast<std::size_t>(model.noise_dim), 0.0));
  return {input.data(), input.data() + 2 * (model.history_length - 1)};
}

Path2 si_forward(const PredictorModel& model, const PedestrianHistory& history,
                 std::span<const double> noise) {
  const Eigen::VectorXd increments = forward(model, assemble_input(model, history, noise), nullptr);
  return increments_to_positions(history.last(), increments);
}

std::vector<std::vector<double>> draw_noise(int count, int noise_dim, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> out(static_cast<std::size_t>(count));
  for (auto& z : out) {
    z.resize(static_cast<std::size_t>(noise_dim));
    for (double& v : z) v = normal(rng);
  }
  return out;
}

PredictionSet predict_learned(const PredictorModel& model, const PedestrianHistory& history,
                              std::uint64_t seed) {
  const auto noise = draw_noise(model.num_samples, model.noise_dim, seed);
  PredictionSet set(history.ped_id, model.num_samples, model.horizon, model.dt, history.last());
  for (int m = 0; m < model.num_samples; ++m) {
    const Path2 path = si_forward(model, history, noise[m]);
    std::copy(path.begin(), path.end(), set.sample(m).begin());
  }
  return set;
}

PredictionSet predict_learned(const PredictorModel& model, const PedestrianHistory& history) {
  return predict_learned(model, history, model.rng_seed);
}

double trajectory_mse(std::span<const Vec2> predicted, std::span<const Vec2> truth) {
  if (predicted.size() != truth.size() || truth.empty()) {
    throw std::invalid_argument("trajectory_mse: length mismatch");
  }
  double sum = 0.0;
  for (std::size_t t = 0; t < truth.size(); ++t) sum += (predicted[t] - truth[t]).squaredNorm();
  return sum / static_cast<double>(truth.size());
}

ImleResult imle_loss(const PredictorModel& model, const PedestrianHistory& history,
                     std::span<const Vec2> truth, int draws, std::uint64_t seed) {
  if (draws < 1) throw std::invalid_argument("imle_loss: need K >= 1");
  if (static_cast<int>(truth.size()) != model.horizon) {
    throw std::invalid_argument("imle_loss: ground truth length does not match the horizon");
  }
  const auto noise = draw_noise(draws, model.noise_dim, seed);
  ImleResult best{std::numeric_limits<double>::infinity(), 0};
  for (int k = 0; k < draws; ++k) {
    const double loss = trajectory_mse(si_forward(model, history, noise[k]), truth);
    if (loss < best.loss) best = {loss, k};
  }
  return best;
}

double accumulate_gradient(const PredictorModel& model, const PedestrianHistory& history,
                           std::span<const double> noise, std::span<const Vec2> truth,
                           std::span<double> grad) {
  if (grad.size() != model.weights.size()) {
    throw std::invalid_argument("accumulate_gradient: gradient buffer has the wrong size");
  }
  if (static_cast<int>(truth.size()) != model.horizon) {
    throw std::invalid_argument("accumulate_gradient: ground truth length mismatch");
  }
  ForwardCache cache;
  const Eigen::VectorXd increments = forward(model, assemble_input(model, history, noise), &cache);
  const Path2 positions = increments_to_positions(history.last(), increments);

  const int n = model.horizon;
  double loss = 0.0;
  Eigen::VectorXd delta(2 * n);
  Vec2 tail = Vec2::Zero();  // sum over t >= s of dL/dp_t
  for (int t = n - 1; t >= 0; --t) {
    const Vec2 err = positions[t] - truth[t];
    loss += err.squaredNorm();
    tail += (2.0 / n) * err;
    delta[2 * t] = tail.x();
    delta[2 * t + 1] = tail.y();
  }
  backward(model, cache, std::move(delta), grad);
  return loss / n;
}

void TrainingConfig::validate() const {
  if (!(learning_rate >= 0.0) || imle_draws < 1 || epochs < 0 || batch_size < 1 ||
      early_stop_patience < 1 || !(validation_fraction > 0.0 && validation_fraction <= 0.5)) {
    throw std::invalid_argument("TrainingConfig: invalid values");
  }
}

namespace {

std::uint64_t example_seed(std::uint64_t seed, std::size_t i) {
  return mix_seed({seed, static_cast<std::uint64_t>(i)});
}

// Selects the IMLE sample for example i and writes its gradient into `grad`
// (which must be zeroed). Returns the selected loss.
double example_gradient(const PredictorModel& model, const TrainingExample& ex, int draws,
                        std::uint64_t seed, std::span<double> grad) {
  const auto noise = draw_noise(draws, model.noise_dim, seed);
  double best = std::numeric_limits<double>::infinity();
  int selected = 0;
  for (int k = 0; k < draws; ++k) {
    const double loss = trajectory_mse(si_forward(model, ex.history, noise[k]), ex.future);
    if (loss < best) {
      best = loss;
      selected = k;
    }
  }
  return accumulate_gradient(model, ex.history, noise[selected], ex.future, grad);
}

void finish(BatchGradient& out, std::size_t n) {
  const double inv = 1.0 / static_cast<double>(n);
  out.loss *= inv;
  for (double& g : out.grad) g *= inv;
}

}  // namespace

BatchGradient batch_gradient_serial(const PredictorModel& model,
                                    std::span<const TrainingExample> batch, int draws,
                                    std::uint64_t seed) {
  if (batch.empty()) throw std::invalid_argument("batch_gradient: empty batch");
  BatchGradient out{0.0, std::vector<double>(model.weights.size(), 0.0)};
  std::vector<double> scratch(model.weights.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::fill(scratch.begin(), scratch.end(), 0.0);
    out.loss += example_gradient(model, batch[i], draws, example_seed(seed, i), scratch);
    for (std::size_t j = 0; j < scratch.size(); ++j) out.grad[j] += scratch[j];
  }
  finish(out, batch.size());
  return out;
}

BatchGradient batch_gradient_omp(const PredictorModel& model,
                                 std::span<const TrainingExample> batch, int draws,
                                 std::uint64_t seed) {
  if (batch.empty()) throw std::invalid_argument("batch_gradient: empty batch");
  const std::size_t p = model.weights.size();
  std::vector<double> per_example(batch.size() * p, 0.0);
  std::vector<double> losses(batch.size(), 0.0);
  detail::omp_for(static_cast<std::ptrdiff_t>(batch.size()), [&](std::ptrdiff_t i) {
    std::span<double> g(per_example.data() + static_cast<std::size_t>(i) * p, p);
    losses[i] = example_gradient(model, batch[i], draws, example_seed(seed, i), g);
  });

  BatchGradient out{0.0, std::vector<double>(p, 0.0)};
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.loss += losses[i];
    const double* g = per_example.data() + i * p;
    for (std::size_t j = 0; j < p; ++j) out.grad[j] += g[j];
  }
  finish(out, batch.size());
  return out;
}

double train_step(PredictorModel& model, std::span<const TrainingExample> batch,
                  const TrainingConfig& config, std::uint64_t seed) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  const BatchGradient bg = batch_gradient_omp(model, batch, config.imle_draws, seed);
  if (!std::isfinite(bg.loss)) {
    throw std::runtime_error("train_step: non-finite IMLE loss (diverged; lower the learning rate)");
  }
  if (config.learning_rate != 0.0) {
    for (std::size_t j = 0; j < model.weights.size(); ++j) {
      model.weights[j] -= config.learning_rate * bg.grad[j];
    }
  }
  return bg.loss;
}

double evaluation_loss(const PredictorModel& model, std::span<const TrainingExample> data,
                       int draws, std::uint64_t seed) {
  if (data.empty()) throw std::invalid_argument("evaluation_loss: empty data set");
  std::vector<double> losses(data.size());
  detail::omp_for(static_cast<std::ptrdiff_t>(data.size()), [&](std::ptrdiff_t i) {
    losses[i] = imle_loss(model, data[i].history, data[i].future, draws, example_seed(seed, i)).loss;
  });
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(data.size());
}

TrainingReport train(PredictorModel& model, std::span<const TrainingExample> data,
                     const TrainingConfig& config, std::uint64_t seed) {
  config.validate();
  model.validate();
  const auto n_val = static_cast<std::size_t>(std::floor(data.size() * config.validation_fraction));
  if (data.size() < 2 || n_val < 1 || n_val >= data.size()) {
    throw std::invalid_argument("train: data set too small for the requested validation split");
  }

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(mix_seed({seed, label_key("split")}));
  std::shuffle(order.begin(), order.end(), split_rng);

  std::vector<TrainingExample> train_set;
  std::vector<TrainingExample> val_set;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_val ? val_set : train_set).push_back(data[order[i]]);
  }

  const auto val_seed = mix_seed({seed, label_key("validation")});
  const auto train_eval_seed = mix_seed({seed, label_key("train-eval")});

  TrainingReport report;
  report.parameter_count = model.parameter_count();
  report.train_size = train_set.size();
  report.validation_size = val_set.size();
  report.train_loss.push_back(evaluation_loss(model, train_set, config.imle_draws, train_eval_seed));
  report.validation_loss.push_back(evaluation_loss(model, val_set, config.imle_draws, val_seed));

  PredictorModel best = model;
  double best_val = report.validation_loss.front();
  int since_best = 0;

  std::vector<std::size_t> idx(train_set.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<TrainingExample> batch;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed({seed, label_key("epoch"), static_cast<std::uint64_t>(epoch)}));
    std::shuffle(idx.begin(), idx.end(), shuffle_rng);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < idx.size(); start += config.batch_size) {
      const std::size_t end = std::min(idx.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(train_set[idx[i]]);
      loss_sum += train_step(model, batch, config,
                             mix_seed({seed, static_cast<std::uint64_t>(epoch),
                                       static_cast<std::uint64_t>(batches)}));
      ++batches;
    }
    report.train_loss.push_back(loss_sum / static_cast<double>(batches));
    const double val = evaluation_loss(model, val_set, config.imle_draws, val_seed);
    report.validation_loss.push_back(val);
    report.epochs_run = epoch;

    if (val < best_val) {
      best_val = val;
      best = model;
      report.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.early_stop_patience) {
      report.early_stopped = true;
      break;
    }
  }
  model = std::move(best);
  return report;
}

namespace {

constexpr char kModelMagic[8] = {'C', 'N', 'A', 'V', 'M', 'D', 'L', '\0'};
constexpr std::uint32_t kModelVersion = 1;

template <class T>
void put(std::ostream& os, const T& value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T value{};
  if (!is.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw std::runtime_error("load_model: truncated model file");
  }
  return value;
}

}  // namespace

void save_model(const PredictorModel& model, const std::filesystem::path& path) {
  model.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("save_model: cannot open " + path.string());
  os.write(kModelMagic, sizeof kModelMagic);
  put<std::uint32_t>(os, kModelVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(model.layer_sizes.size()));
  for (int s : model.layer_sizes) put<std::int32_t>(os, s);
  put<std::int32_t>(os, model.noise_dim);
  put<std::int32_t>(os, model.num_samples);
  put<std::int32_t>(os, model.horizon);
  put<std::int32_t>(os, model.history_length);
  put<double>(os, model.dt);
  put<std::uint64_t>(os, model.rng_seed);
  put<std::uint64_t>(os, model.weights.size());
  os.write(reinterpret_cast<const char*>(model.weights.data()),
           static_cast<std::streamsize>(model.weights.size() * sizeof(double)));
  if (!os) throw std::runtime_error("save_model: write failed for " + path.string());
}

PredictorModel load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_model: cannot open " + path.string());
  char magic[sizeof kModelMagic];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kModelMagic, sizeof magic) != 0) {
    throw std::runtime_error("load_model: not a model file: " + path.string());
  }
  if (const auto version = get<std::uint32_t>(is); version != kModelVersion) {
    throw std::runtime_error("load_model: unsupported model version " + std::to_string(version));
  }
  PredictorModel m;
  const auto layers = get<std::uint32_t>(is);
  if (layers < 2 || layers > 64) throw std::runtime_error("load_model: bad layer count");
  for (std::uint32_t i = 0; i < layers; ++i) m.layer_sizes.push_back(get<std::int32_t>(is));
  m.noise_dim = get<std::int32_t>(is);
  m.num_samples = get<std::int32_t>(is);
  m.horizon = get<std::int32_t>(is);
  m.history_length = get<std::int32_t>(is);
  m.dt = get<double>(is);
  m.rng_seed = get<std::uint64_t>(is);
  const auto count = get<std::uint64_t>(is);
  if (count != crowdnav::parameter_count(m.layer_sizes)) {
    throw std::runtime_error("load_model: weight count does not match layer sizes");
  }
  m.weights.resize(count);
  if (!is.read(reinterpret_cast<char*>(m.weights.data()),
               static_cast<std::streamsize>(count * sizeof(double)))) {
    throw std::runtime_error("load_model: truncated weights");
  }
  m.validate();
  return m;
}

LearnedPredictor::LearnedPredictor(PredictorModel model, std::uint64_t seed)
    : model_(std::move(model)), seed_(seed) {
  model_.validate();
}

PredictionSet LearnedPredictor::predict(const PedestrianHistory& history,
                                        std::uint64_t cycle) const {
  const auto seed = mix_seed({seed_, label_key("learned"),
                              static_cast<std::uint64_t>(history.ped_id), cycle});
  return predict_learned(model_, history, seed);
}

}  // namespace crowdnav
