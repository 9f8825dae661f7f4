#include "crowdnav/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>

namespace crowdnav {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Empty cell for missing values, shortest round-trip text otherwise.
std::string cell(double v) { return std::isfinite(v) ? fmt::format("{}", v) : std::string(); }

json jnum(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double mean_finite(const std::vector<double>& values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double v : values) {
    if (std::isfinite(v)) {
      sum += v;
      ++n;
    }
  }
  return n == 0 ? kNaN : sum / static_cast<double>(n);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_header(std::ostream& out, const std::vector<std::string>& columns) {
  for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
  out << '\n';
}

}  // namespace

double improvement_pct(double learned, double cv, bool higher_is_better) {
  if (!std::isfinite(learned) || !std::isfinite(cv) || cv == 0.0) return kNaN;
  return (higher_is_better ? learned - cv : cv - learned) / cv * 100.0;
}

double percentile95(std::vector<double> values) {
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(values.size())));
  return values[std::max<std::size_t>(rank, 1) - 1];
}

const std::vector<std::string>& comparison_columns() {
  static const std::vector<std::string> c{"n_peds", "metric", "learned", "cv", "improvement_pct"};
  return c;
}
const std::vector<std::string>& open_vs_closed_columns() {
  static const std::vector<std::string> c{"method", "ade", "fde", "amd", "amv"};
  return c;
}
const std::vector<std::string>& run_columns() {
  static const std::vector<std::string> c{
      "scenario",     "predictor", "n_peds", "verdict", "cycles",          "min_distance",
      "min_center_distance", "collision", "time_taken", "jerk", "mpc_mse"};
  return c;
}
const std::vector<std::string>& acceleration_columns() {
  static const std::vector<std::string> c{"time", "linear", "angular"};
  return c;
}

Report build_report(std::span<const SimLog> logs,
                    const std::optional<OpenLoopScores>& dataset_scores) {
  if (logs.empty()) throw std::invalid_argument("report: no logs");
  Report report;

  // Open loop, bucketed by (predictor, pedestrian count).
  std::vector<SimLog> with_peds;
  for (const auto& log : logs) {
    if (log.num_pedestrians() > 0) with_peds.push_back(log);
  }
  std::map<int, std::map<std::string, OpenLoopScores>> open;
  if (!with_peds.empty()) {
    std::vector<BucketScores> buckets;
    try {
      buckets = aggregate_open_loop(with_peds);
    } catch (const std::runtime_error&) {
      // no prediction had a full realised horizon; the table stays empty
    }
    for (const auto& b : buckets) open[b.num_pedestrians][b.predictor] = b.scores;
  }
  auto side = [](const std::map<std::string, OpenLoopScores>& m, const char* name,
                 double OpenLoopScores::*field) {
    const auto it = m.find(name);
    return it == m.end() ? kNaN : it->second.*field;
  };
  for (const auto& [n, by_predictor] : open) {
    const std::pair<const char*, double OpenLoopScores::*> metrics[] = {
        {"ADE", &OpenLoopScores::ade},
        {"FDE", &OpenLoopScores::fde},
        {"AMD", &OpenLoopScores::amd},
        {"AMV", &OpenLoopScores::amv}};
    for (const auto& [metric, field] : metrics) {
      const double l = side(by_predictor, "learned", field);
      const double c = side(by_predictor, "cv", field);
      report.open_loop.push_back({n, metric, l, c, improvement_pct(l, c)});
    }
  }

  // Per-run closed-loop scores.
  std::map<int, std::map<std::string, std::vector<const RunSummary*>>> closed;
  for (const auto& log : logs) {
    RunSummary r;
    r.scenario = log.scenario;
    r.predictor = log.predictor;
    r.num_pedestrians = log.num_pedestrians();
    r.verdict = to_string(log.verdict);
    r.cycles = log.cycles.size();
    r.scores = score_closed_loop(log);
    report.runs.push_back(std::move(r));
    report.accelerations.emplace_back(log.scenario + "_" + log.predictor,
                                      acceleration_series(log));
  }
  for (const auto& r : report.runs) {
    if (r.verdict != to_string(Verdict::Failed)) closed[r.num_pedestrians][r.predictor].push_back(&r);
  }
  for (const auto& [n, by_predictor] : closed) {
    auto mean_of = [&](const char* name, auto getter) {
      const auto it = by_predictor.find(name);
      if (it == by_predictor.end()) return kNaN;
      std::vector<double> v;
      for (const RunSummary* r : it->second) v.push_back(getter(*r));
      return mean_finite(v);
    };
    struct Metric {
      const char* name;
      bool higher_is_better;
      double (*get)(const RunSummary&);
    };
    const Metric metrics[] = {
        {"min_distance", true, [](const RunSummary& r) { return r.scores.min_distance; }},
        {"time_taken", false,
         [](const RunSummary& r) { return r.scores.time_taken.value_or(kNaN); }},
        {"jerk", false, [](const RunSummary& r) { return r.scores.jerk; }},
        {"mpc_mse", false, [](const RunSummary& r) { return r.scores.mpc_mse; }}};
    for (const auto& m : metrics) {
      const double l = mean_of("learned", m.get);
      const double c = mean_of("cv", m.get);
      report.closed_loop.push_back({n, m.name, l, c, improvement_pct(l, c, m.higher_is_better)});
    }
  }

  if (dataset_scores) {
    report.open_vs_closed.push_back({"open_loop_dataset", *dataset_scores});
    std::vector<SimLog> learned_logs;
    for (const auto& log : with_peds) {
      if (log.predictor == "learned") learned_logs.push_back(log);
    }
    OpenLoopScores closed_scores{kNaN, kNaN, kNaN, kNaN};
    if (!learned_logs.empty()) {
      // Pool every learned prediction regardless of density.
      try {
        const auto buckets = aggregate_open_loop(learned_logs);
        double total = 0.0;
        closed_scores = {0.0, 0.0, 0.0, 0.0};
        for (const auto& b : buckets) {
          const double w = static_cast<double>(b.samples);
          closed_scores.ade += w * b.scores.ade;
          closed_scores.fde += w * b.scores.fde;
          closed_scores.amd += w * b.scores.amd;
          closed_scores.amv += w * b.scores.amv;
          total += w;
        }
        closed_scores.ade /= total;
        closed_scores.fde /= total;
        closed_scores.amd /= total;
        closed_scores.amv /= total;
      } catch (const std::runtime_error&) {
        closed_scores = {kNaN, kNaN, kNaN, kNaN};
      }
    }
    report.open_vs_closed.push_back({"closed_loop_learned", closed_scores});
  }
  return report;
}

void write_report(const Report& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "accel");

  auto write_comparison = [&](const char* file, const std::vector<ComparisonRow>& rows) {
    auto out = open_out(dir / file);
    write_header(out, comparison_columns());
    for (const auto& r : rows) {
      out << fmt::format("{},{},{},{},{}\n", r.num_pedestrians, r.metric, cell(r.learned),
                         cell(r.cv), cell(r.improvement_pct));
    }
  };
  write_comparison("table2_open_loop.csv", report.open_loop);
  write_comparison("table4_closed_loop.csv", report.closed_loop);

  if (!report.open_vs_closed.empty()) {
    auto out = open_out(dir / "table3_open_vs_closed.csv");
    write_header(out, open_vs_closed_columns());
    for (const auto& r : report.open_vs_closed) {
      out << fmt::format("{},{},{},{},{}\n", r.method, cell(r.scores.ade), cell(r.scores.fde),
                         cell(r.scores.amd), cell(r.scores.amv));
    }
  }

  {
    auto out = open_out(dir / "runs.csv");
    write_header(out, run_columns());
    for (const auto& r : report.runs) {
      const auto& s = r.scores;
      out << fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", r.scenario, r.predictor,
                         r.num_pedestrians, r.verdict, r.cycles, cell(s.min_distance),
                         cell(s.min_center_distance), s.collision ? 1 : 0,
                         cell(s.time_taken.value_or(kNaN)), cell(s.jerk), cell(s.mpc_mse));
    }
  }

  for (const auto& [name, series] : report.accelerations) {
    auto out = open_out(dir / "accel" / (name + ".csv"));
    write_header(out, acceleration_columns());
    for (const auto& a : series) out << fmt::format("{},{},{}\n", a.time, a.linear, a.angular);
  }

  json j;
  j["schema"] = kReportSchema;
  auto rows_json = [](const std::vector<ComparisonRow>& rows) {
    json a = json::array();
    for (const auto& r : rows) {
      a.push_back({{"n_peds", r.num_pedestrians},
                   {"metric", r.metric},
                   {"learned", jnum(r.learned)},
                   {"cv", jnum(r.cv)},
                   {"improvement_pct", jnum(r.improvement_pct)}});
    }
    return a;
  };
  j["open_loop"] = rows_json(report.open_loop);
  j["closed_loop"] = rows_json(report.closed_loop);
  j["open_vs_closed"] = json::array();
  for (const auto& r : report.open_vs_closed) {
    j["open_vs_closed"].push_back({{"method", r.method},
                                   {"ade", jnum(r.scores.ade)},
                                   {"fde", jnum(r.scores.fde)},
                                   {"amd", jnum(r.scores.amd)},
                                   {"amv", jnum(r.scores.amv)}});
  }
  j["runs"] = json::array();
  for (const auto& r : report.runs) {
    j["runs"].push_back({{"scenario", r.scenario},
                         {"predictor", r.predictor},
                         {"n_peds", r.num_pedestrians},
                         {"verdict", r.verdict},
                         {"cycles", r.cycles},
                         {"min_distance", jnum(r.scores.min_distance)},
                         {"min_center_distance", jnum(r.scores.min_center_distance)},
                         {"collision", r.scores.collision},
                         {"time_taken", jnum(r.scores.time_taken.value_or(kNaN))},
                         {"jerk", jnum(r.scores.jerk)},
                         {"mpc_mse", jnum(r.scores.mpc_mse)}});
  }
  auto out = open_out(dir / "report.json");
  out << j.dump(2) << '\n';
}

}  // namespace crowdnav
