#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "crowdnav/config.hpp"
#include "crowdnav/learned_predictor.hpp"
#include "crowdnav/metrics.hpp"
#include "crowdnav/report.hpp"
#include "crowdnav/simlog.hpp"

namespace crowdnav {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitRunFailure = 3 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class RunFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-component seeds derived from the single --seed value.
struct SeedFanout {
  std::uint64_t master = 0;

  std::uint64_t training_data() const;
  std::uint64_t model_init() const;
  std::uint64_t training() const;
  std::uint64_t predictor(const std::string& name, std::uint64_t scenario_seed) const;
  std::uint64_t openloop(const std::string& name) const;
};

/// "cv" or "learned"; the learned predictor needs a model.
std::unique_ptr<Predictor> make_predictor(const std::string& name, const AppConfig& config,
                                          const std::optional<PredictorModel>& model,
                                          std::uint64_t seed);

PredictorModel load_model_or_throw(const std::filesystem::path& path);

// ---- train ------------------------------------------------------------------

struct TrainOptions {
  AppConfig config;
  std::string source = "synthetic";  // synthetic | eth
  std::optional<std::filesystem::path> eth_file;
  std::filesystem::path model_out = "model.bin";
  std::optional<std::filesystem::path> report_out;  // default: <model_out>.report.json
  std::uint64_t seed = 0;
};

struct TrainOutcome {
  TrainingReport report;
  std::filesystem::path model_path;
  std::filesystem::path report_path;
};

TrainOutcome cmd_train(const TrainOptions& options);

// ---- run --------------------------------------------------------------------

struct RunOptions {
  AppConfig config;
  std::vector<std::string> scenarios{"all"};
  std::string predictor = "both";  // cv | learned | both
  std::optional<std::filesystem::path> model;
  std::filesystem::path out_dir = "runs";
  std::uint64_t seed = 0;
};

struct RunRecord {
  std::string scenario;
  std::string predictor;
  std::filesystem::path log_path;
  std::string digest;
  Verdict verdict = Verdict::Timeout;
};

/// Writes logs/<scenario>_<predictor>.jsonl, csv/..., timing/... and
/// manifest.json under out_dir. Throws RunFailure after writing everything if
/// any run ended with a failed verdict.
std::vector<RunRecord> cmd_run(const RunOptions& options);

/// Same runs without touching the file system.
std::vector<SimLog> run_suite(const RunOptions& options);

// ---- openloop ---------------------------------------------------------------

struct OpenLoopOptions {
  AppConfig config;
  std::filesystem::path eth_file;
  std::string predictor = "learned";
  std::optional<std::filesystem::path> model;
  int stride = 1;
  std::uint64_t seed = 0;
};

struct OpenLoopOutcome {
  OpenLoopScores scores;
  std::size_t windows = 0;
};

OpenLoopOutcome cmd_openloop(const OpenLoopOptions& options);

// ---- report -----------------------------------------------------------------

struct ReportOptions {
  AppConfig config;
  std::filesystem::path logs_dir = "runs";
  std::filesystem::path out_dir = "report";
  std::optional<std::filesystem::path> eth_file;
  std::optional<std::filesystem::path> model;
  std::uint64_t seed = 0;
};

/// Loads every *.jsonl under logs_dir (or logs_dir/logs) in natural name
/// order (scene2 before scene10).
std::vector<SimLog> load_log_dir(const std::filesystem::path& dir);

Report cmd_report(const ReportOptions& options);

}  // namespace crowdnav
