#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crowdnav/metrics.hpp"
#include "crowdnav/simlog.hpp"

namespace crowdnav {

inline constexpr const char* kReportSchema = "crowdnav.report/1";

/// Relative gain of the learned predictor over CV in percent. For
/// lower-is-better metrics (CV - learned) / CV * 100, otherwise
/// (learned - CV) / CV * 100. NaN if either side is missing or CV is 0.
double improvement_pct(double learned, double cv, bool higher_is_better = false);

/// One row of a learned-vs-CV comparison table.
struct ComparisonRow {
  int num_pedestrians = 0;
  std::string metric;
  double learned = 0.0;  // NaN when no learned run falls in the bucket
  double cv = 0.0;
  double improvement_pct = 0.0;
};

struct OpenVsClosedRow {
  std::string method;
  OpenLoopScores scores;
};

struct RunSummary {
  std::string scenario;
  std::string predictor;
  int num_pedestrians = 0;
  std::string verdict;
  std::size_t cycles = 0;
  ClosedLoopScores scores;
};

struct Report {
  std::vector<ComparisonRow> open_loop;      // ADE, FDE, AMD, AMV per bucket
  std::vector<ComparisonRow> closed_loop;    // min distance, time, jerk, MPC MSE per bucket
  std::vector<OpenVsClosedRow> open_vs_closed;  // empty without a dataset evaluation
  std::vector<RunSummary> runs;
  std::vector<std::pair<std::string, std::vector<AccelerationSample>>> accelerations;
};

/// Builds all tables from a set of logs. Failed runs appear in `runs` but are
/// excluded from the closed-loop averages. `dataset_scores`, when given, is
/// the learned predictor's open-loop score on a recorded dataset and adds the
/// open-vs-closed comparison. Throws std::invalid_argument for an empty log
/// set.
Report build_report(std::span<const SimLog> logs,
                    const std::optional<OpenLoopScores>& dataset_scores = std::nullopt);

/// Column headers, fixed per schema version.
const std::vector<std::string>& comparison_columns();
const std::vector<std::string>& open_vs_closed_columns();
const std::vector<std::string>& run_columns();
const std::vector<std::string>& acceleration_columns();

/// Writes table2_open_loop.csv, table3_open_vs_closed.csv (when available),
/// table4_closed_loop.csv, runs.csv, accel/<run>.csv and report.json.
void write_report(const Report& report, const std::filesystem::path& dir);

/// 95th percentile by nearest rank.
double percentile95(std::vector<double> values);

}  // namespace crowdnav
