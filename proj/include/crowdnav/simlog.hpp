#pragma once

#include <optional>
#include <string>
#include <vector>

#include "crowdnav/dynamics.hpp"
#include "crowdnav/mpc.hpp"
#include "crowdnav/prediction.hpp"

namespace crowdnav {

/// A prediction as stored in the log. `anchor_cycle` is the cycle of the
/// observation the prediction was conditioned on, so step k of the set lines
/// up with the logged positions at anchor_cycle + k * dt_pred / dt.
struct StoredPrediction {
  int anchor_cycle = 0;
  int observed_count = 0;
  PredictionSet set;

  bool operator==(const StoredPrediction&) const = default;
};

struct SolveSummary {
  double cost = 0.0;
  double max_violation = 0.0;
  int iterations = 0;
  MpcStatus status = MpcStatus::Optimal;
  RobotState plan_next;  // planner's one-step-ahead state

  bool operator==(const SolveSummary&) const = default;
};

struct CycleRecord {
  int cycle = 0;
  double time = 0.0;
  RobotState robot;
  std::vector<Vec2> pedestrians;  // true positions, ordered like SimLog::ped_ids
  // Absent on the terminal record.
  std::optional<ControlInput> control;
  std::optional<SolveSummary> solve;
  std::vector<StoredPrediction> predictions;

  bool operator==(const CycleRecord&) const = default;
};

enum class Verdict { GoalReached, Timeout, Collision, Failed };

std::string to_string(Verdict verdict);
Verdict verdict_from_string(const std::string& text);

struct SimLog {
  std::string scenario;
  std::string predictor;
  std::uint64_t seed = 0;
  double dt = kDefaultDt;
  double robot_radius = 0.4;
  double ped_radius = 0.3;
  Vec2 goal = Vec2::Zero();
  double goal_tolerance = 0.1;
  std::vector<int> ped_ids;
  std::vector<CycleRecord> cycles;
  Verdict verdict = Verdict::Timeout;
  std::string diagnostic;
  std::string planner_config;  // JSON text of the planner settings used

  // Wall-clock solve times per cycle. Kept out of the serialized log so logs
  // stay byte-reproducible.
  std::vector<double> solve_times;

  int num_pedestrians() const { return static_cast<int>(ped_ids.size()); }
  double duration() const { return cycles.empty() ? 0.0 : cycles.back().time; }
};

}  // namespace crowdnav
