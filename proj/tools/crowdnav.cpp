// crowdnav: train predictors, run the scenario suite, score and report.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "crowdnav/commands.hpp"
#include "crowdnav/config.hpp"

namespace {

using namespace crowdnav;

AppConfig config_from(const std::string& path) {
  if (path.empty()) return parse_config(nlohmann::json{{"schema", kConfigSchema}});
  return load_config(path);
}

void print_scores(const OpenLoopScores& s) {
  fmt::print("ADE {:.6f}\nFDE {:.6f}\nAMD {:.6f}\nAMV {:.6f}\n", s.ade, s.fde, s.amd, s.amv);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Crowd navigation with learned pedestrian prediction and MPC"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Master seed fanned out to every component");

  // train
  auto* train = app.add_subcommand("train", "Train the learned predictor");
  std::string source = "synthetic";
  std::string eth_train;
  std::string model_out = "model.bin";
  std::string train_report;
  std::optional<int> epochs;
  train->add_option("--source", source, "synthetic | eth")->check(CLI::IsMember({"synthetic", "eth"}));
  train->add_option("--eth", eth_train, "ETH-format file (source=eth)");
  train->add_option("--out", model_out, "Model file to write");
  train->add_option("--report", train_report, "Training report (default <out>.report.json)");
  train->add_option("--epochs", epochs, "Override the configured epoch count")->check(CLI::NonNegativeNumber);

  // run
  auto* run = app.add_subcommand("run", "Run scenarios in closed loop");
  std::vector<std::string> scenarios{"all"};
  std::string predictor = "both";
  std::string model;
  std::string run_out = "runs";
  run->add_option("--scenario", scenarios, "Scenario name(s) or 'all'");
  run->add_option("--predictor", predictor, "cv | learned | both");
  run->add_option("--model", model, "Learned predictor model file");
  run->add_option("--out", run_out, "Output directory");

  // openloop
  auto* openloop = app.add_subcommand("openloop", "Score a predictor on an ETH-format file");
  std::string eth_eval;
  std::string ol_predictor = "learned";
  int stride = 1;
  openloop->add_option("--eth", eth_eval, "ETH-format file")->required();
  openloop->add_option("--predictor", ol_predictor, "cv | learned");
  openloop->add_option("--model", model, "Learned predictor model file");
  openloop->add_option("--stride", stride, "Window stride in frames");

  // report
  auto* report = app.add_subcommand("report", "Build tables from run logs");
  std::string logs_dir = "runs";
  std::string report_out = "report";
  std::string eth_report;
  report->add_option("--logs", logs_dir, "Directory with SimLogs");
  report->add_option("--out", report_out, "Output directory");
  report->add_option("--eth", eth_report, "ETH-format file for the open-vs-closed table");
  report->add_option("--model", model, "Learned predictor model file (with --eth)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const AppConfig config = config_from(config_path);
    const auto model_path = model.empty() ? std::nullopt
                                          : std::optional<std::filesystem::path>(model);

    if (*train) {
      TrainOptions o;
      o.config = config;
      if (epochs) o.config.training.epochs = *epochs;
      o.source = source;
      if (!eth_train.empty()) o.eth_file = eth_train;
      o.model_out = model_out;
      if (!train_report.empty()) o.report_out = train_report;
      o.seed = seed;
      const auto out = cmd_train(o);
      const auto& r = out.report;
      fmt::print("trained {} parameters on {} windows ({} validation)\n", r.parameter_count,
                 r.train_size, r.validation_size);
      fmt::print("validation loss {:.6f} -> {:.6f} (best epoch {}, {} epochs{})\n",
                 r.validation_loss.front(), r.validation_loss[r.best_epoch], r.best_epoch,
                 r.epochs_run, r.early_stopped ? ", early stop" : "");
      fmt::print("model: {}\nreport: {}\n", out.model_path.string(), out.report_path.string());
    } else if (*run) {
      RunOptions o;
      o.config = config;
      o.scenarios = scenarios;
      o.predictor = predictor;
      o.model = model_path;
      o.out_dir = run_out;
      o.seed = seed;
      const auto records = cmd_run(o);
      for (const auto& r : records) {
        fmt::print("{:<10} {:<8} {:<13} {}\n", r.scenario, r.predictor, to_string(r.verdict),
                   r.digest);
      }
      fmt::print("{} run(s) written to {}\n", records.size(), run_out);
    } else if (*openloop) {
      OpenLoopOptions o;
      o.config = config;
      o.eth_file = eth_eval;
      o.predictor = ol_predictor;
      o.model = model_path;
      o.stride = stride;
      o.seed = seed;
      const auto out = cmd_openloop(o);
      fmt::print("windows {}\n", out.windows);
      print_scores(out.scores);
    } else if (*report) {
      ReportOptions o;
      o.config = config;
      o.logs_dir = logs_dir;
      o.out_dir = report_out;
      if (!eth_report.empty()) o.eth_file = eth_report;
      o.model = model_path;
      o.seed = seed;
      const auto r = cmd_report(o);
      fmt::print("{} run(s), {} open-loop rows, {} closed-loop rows -> {}\n", r.runs.size(),
                 r.open_loop.size(), r.closed_loop.size(), report_out);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitData;
  } catch (const RunFailure& e) {
    std::cerr << "run failure: " << e.what() << '\n';
    return kExitRunFailure;
  } catch (const std::exception& e) {
    std::cerr << "run failure: " << e.what() << '\n';
    return kExitRunFailure;
  }
  return kExitOk;
}
