#include "crowdnav/commands.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

#include "crowdnav/crowd.hpp"
#include "crowdnav/eth_format.hpp"
#include "crowdnav/rng.hpp"
#include "crowdnav/simlog_io.hpp"
#include "crowdnav/simulation.hpp"

namespace crowdnav {

using nlohmann::json;

std::uint64_t SeedFanout::training_data() const { return mix_seed({master, label_key("data")}); }
std::uint64_t SeedFanout::model_init() const { return mix_seed({master, label_key("init")}); }
std::uint64_t SeedFanout::training() const { return mix_seed({master, label_key("train")}); }
std::uint64_t SeedFanout::predictor(const std::string& name, std::uint64_t scenario_seed) const {
  return mix_seed({master, label_key("predictor"), label_key(name), scenario_seed});
}
std::uint64_t SeedFanout::openloop(const std::string& name) const {
  return mix_seed({master, label_key("openloop"), label_key(name)});
}

PredictorModel load_model_or_throw(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("model file not found: " + path.string());
  try {
    return load_model(path);
  } catch (const std::exception& e) {
    throw DataError(fmt::format("cannot load model {}: {}", path.string(), e.what()));
  }
}

std::unique_ptr<Predictor> make_predictor(const std::string& name, const AppConfig& config,
                                          const std::optional<PredictorModel>& model,
                                          std::uint64_t seed) {
  if (name == "cv") {
    CvPredictorConfig cv = config.cv;
    cv.seed = seed;
    return std::make_unique<CvPredictor>(cv);
  }
  if (name == "learned") {
    if (!model) throw UsageError("the learned predictor needs a model file (--model)");
    if (std::abs(model->dt - config.sim.dt_obs) > 1e-12) {
      throw DataError(fmt::format("model observation interval {} s differs from the configured {} s",
                                  model->dt, config.sim.dt_obs));
    }
    return std::make_unique<LearnedPredictor>(*model, seed);
  }
  throw UsageError("unknown predictor '" + name + "' (valid: cv, learned)");
}

namespace {

std::optional<PredictorModel> model_for(const std::vector<std::string>& predictors,
                                        const std::optional<std::filesystem::path>& path,
                                        const AppConfig& config) {
  const bool needs = std::find(predictors.begin(), predictors.end(), "learned") != predictors.end();
  if (!needs) return std::nullopt;
  std::optional<std::filesystem::path> p = path;
  if (!p && config.model_path) p = *config.model_path;
  if (!p) throw UsageError("the learned predictor needs a model file (--model)");
  return load_model_or_throw(*p);
}

std::vector<std::string> predictor_list(const std::string& choice) {
  if (choice == "both") return {"learned", "cv"};
  if (choice == "cv" || choice == "learned") return {choice};
  throw UsageError("unknown predictor '" + choice + "' (valid: cv, learned, both)");
}

std::vector<ScenarioSpec> select_scenarios(const AppConfig& config,
                                           const std::vector<std::string>& names) {
  if (names.empty()) throw UsageError("no scenario selected");
  if (std::find(names.begin(), names.end(), "all") != names.end()) return config.all_scenarios();
  std::vector<ScenarioSpec> out;
  for (const auto& n : names) {
    try {
      out.push_back(config.scenario(n));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  return out;
}

// "scene2" before "scene10".
bool natural_less(const std::string& a, const std::string& b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const bool da = std::isdigit(static_cast<unsigned char>(a[i])) != 0;
    const bool db = std::isdigit(static_cast<unsigned char>(b[j])) != 0;
    if (da && db) {
      std::size_t ei = i, ej = j;
      while (ei < a.size() && std::isdigit(static_cast<unsigned char>(a[ei]))) ++ei;
      while (ej < b.size() && std::isdigit(static_cast<unsigned char>(b[ej]))) ++ej;
      const std::string na = a.substr(i, ei - i), nb = b.substr(j, ej - j);
      const auto ta = na.find_first_not_of('0'), tb = nb.find_first_not_of('0');
      const std::string sa = ta == std::string::npos ? "" : na.substr(ta);
      const std::string sb = tb == std::string::npos ? "" : nb.substr(tb);
      if (sa.size() != sb.size()) return sa.size() < sb.size();
      if (sa != sb) return sa < sb;
      i = ei;
      j = ej;
    } else {
      if (a[i] != b[j]) return a[i] < b[j];
      ++i;
      ++j;
    }
  }
  if (a.size() - i != b.size() - j) return a.size() - i < b.size() - j;
  return a < b;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::vector<TrainingExample> training_data(const TrainOptions& o, const SeedFanout& seeds) {
  if (o.source == "synthetic") {
    try {
      return generate_synthetic_crowd(o.config.synthetic, seeds.training_data());
    } catch (const std::invalid_argument& e) {
      throw DataError(e.what());
    }
  }
  if (o.source == "eth") {
    if (!o.eth_file) throw UsageError("--eth is required for the eth source");
    try {
      const EthData data = load_eth_format(*o.eth_file);
      return eth_windows(data, o.config.cv.history_length, o.config.cv.horizon,
                         o.config.sim.dt_obs, o.config.synthetic.window_stride);
    } catch (const std::runtime_error& e) {
      throw DataError(e.what());
    }
  }
  throw UsageError("unknown training source '" + o.source + "' (valid: synthetic, eth)");
}

}  // namespace

TrainOutcome cmd_train(const TrainOptions& options) {
  const SeedFanout seeds{options.seed};
  const auto data = training_data(options, seeds);
  PredictorModel model = make_model(options.config.model_shape, seeds.model_init());
  TrainingReport report;
  try {
    report = train(model, data, options.config.training, seeds.training());
  } catch (const std::invalid_argument& e) {
    throw DataError(fmt::format("training data ({} windows): {}", data.size(), e.what()));
  }

  TrainOutcome out;
  out.report = report;
  out.model_path = options.model_out;
  out.report_path =
      options.report_out ? *options.report_out
                         : std::filesystem::path(options.model_out.string() + ".report.json");
  if (options.model_out.has_parent_path()) {
    std::filesystem::create_directories(options.model_out.parent_path());
  }
  save_model(model, options.model_out);

  json j = {{"schema", "crowdnav.train/1"},
            {"source", options.source},
            {"seed", options.seed},
            {"windows", data.size()},
            {"train_size", report.train_size},
            {"validation_size", report.validation_size},
            {"parameter_count", report.parameter_count},
            {"epochs_run", report.epochs_run},
            {"best_epoch", report.best_epoch},
            {"early_stopped", report.early_stopped},
            {"train_loss", report.train_loss},
            {"validation_loss", report.validation_loss},
            {"note", report.epochs_run == 0 ? "no training: model equals its initialization" : ""}};
  write_text(out.report_path, j.dump(2) + "\n");
  return out;
}

std::vector<SimLog> run_suite(const RunOptions& options) {
  const auto predictors = predictor_list(options.predictor);
  const auto scenarios = select_scenarios(options.config, options.scenarios);
  const auto model = model_for(predictors, options.model, options.config);
  const SeedFanout seeds{options.seed};

  std::vector<SimLog> logs;
  for (auto scenario : scenarios) {
    scenario.seed = mix_seed({options.seed, label_key("scenario"), scenario.seed});
    for (const auto& name : predictors) {
      const auto predictor =
          make_predictor(name, options.config, model, seeds.predictor(name, scenario.seed));
      try {
        logs.push_back(run_closed_loop(scenario, *predictor, options.config.sim));
      } catch (const std::invalid_argument& e) {
        throw DataError(fmt::format("{} / {}: {}", scenario.name, name, e.what()));
      }
    }
  }
  return logs;
}

std::vector<RunRecord> cmd_run(const RunOptions& options) {
  const auto logs = run_suite(options);
  const auto& dir = options.out_dir;
  for (const char* sub : {"logs", "csv", "timing"}) std::filesystem::create_directories(dir / sub);

  std::vector<RunRecord> records;
  json runs = json::array();
  std::vector<std::string> failed;
  for (const auto& log : logs) {
    const std::string stem = log.scenario + "_" + log.predictor;
    RunRecord r{log.scenario, log.predictor, dir / "logs" / (stem + ".jsonl"), "", log.verdict};
    const std::string text = serialize_simlog(log);
    r.digest = fmt::format("{:016x}", label_key(text));
    write_text(r.log_path, text);
    {
      std::ofstream csv(dir / "csv" / (stem + ".csv"), std::ios::binary);
      write_simlog_csv(csv, log);
      std::ofstream timing(dir / "timing" / (stem + ".csv"), std::ios::binary);
      write_timing_csv(timing, log);
    }
    runs.push_back({{"scenario", r.scenario},
                    {"predictor", r.predictor},
                    {"log", std::filesystem::path("logs") / (stem + ".jsonl")},
                    {"digest", r.digest},
                    {"verdict", to_string(r.verdict)},
                    {"cycles", log.cycles.size()}});
    if (log.verdict == Verdict::Failed) failed.push_back(stem + ": " + log.diagnostic);
    records.push_back(std::move(r));
  }
  json manifest = {{"schema", "crowdnav.manifest/1"},
                   {"seed", options.seed},
                   {"predictor", options.predictor},
                   {"config", to_json(options.config)},
                   {"runs", runs}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");

  if (!failed.empty()) {
    std::string msg = fmt::format("{} run(s) failed:", failed.size());
    for (const auto& f : failed) msg += "\n  " + f;
    throw RunFailure(msg);
  }
  return records;
}

OpenLoopOutcome cmd_openloop(const OpenLoopOptions& options) {
  EthData data;
  try {
    data = load_eth_format(options.eth_file);
  } catch (const std::runtime_error& e) {
    throw DataError(e.what());
  }
  const auto model = model_for({options.predictor}, options.model, options.config);
  const SeedFanout seeds{options.seed};
  const auto predictor =
      make_predictor(options.predictor, options.config, model, seeds.openloop(options.predictor));
  if (options.stride < 1) throw UsageError("--stride must be >= 1");

  const auto windows = eth_windows(data, predictor->history_length(), predictor->horizon(),
                                   predictor->dt(), options.stride);
  if (windows.empty()) {
    throw DataError(fmt::format("no windows: no track has {} consecutive frames",
                                predictor->history_length() + predictor->horizon()));
  }
  std::vector<PredictionSet> sets(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    sets[i] = predictor->predict(windows[i].history, i);
  }
  std::vector<ScoringJob> jobs;
  jobs.reserve(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) jobs.push_back({&sets[i], windows[i].future});
  const auto scores = score_jobs_omp(jobs);
  return {mean_scores(scores), windows.size()};
}

std::vector<SimLog> load_log_dir(const std::filesystem::path& dir) {
  std::filesystem::path root = dir;
  if (std::filesystem::is_directory(dir / "logs")) root = dir / "logs";
  if (!std::filesystem::is_directory(root)) throw DataError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(root)) {
    if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end(), [](const auto& a, const auto& b) {
    return natural_less(a.filename().string(), b.filename().string());
  });
  if (files.empty()) throw DataError("no .jsonl logs in " + root.string());
  std::vector<SimLog> logs;
  for (const auto& f : files) {
    try {
      logs.push_back(load_simlog(f));
    } catch (const LogFormatError& e) {
      throw DataError(e.what());
    }
  }
  return logs;
}

Report cmd_report(const ReportOptions& options) {
  const auto logs = load_log_dir(options.logs_dir);
  std::optional<OpenLoopScores> dataset;
  if (options.eth_file) {
    OpenLoopOptions ol;
    ol.config = options.config;
    ol.eth_file = *options.eth_file;
    ol.predictor = "learned";
    ol.model = options.model;
    ol.seed = options.seed;
    dataset = cmd_openloop(ol).scores;
  }
  Report report = build_report(logs, dataset);
  write_report(report, options.out_dir);
  return report;
}

}  // namespace crowdnav
