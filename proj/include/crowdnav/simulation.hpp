#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crowdnav/crowd.hpp"
#include "crowdnav/mpc.hpp"
#include "crowdnav/prediction.hpp"
#include "crowdnav/simlog.hpp"

namespace crowdnav {

/// Named points of the test arena.
struct LayoutTable {
  std::map<std::string, Vec2> points;

  /// 12 m x 10 m arena (x in [-6, 6], y in [-1, 9]) with SP at the origin.
  static LayoutTable defaults();

  /// Throws std::invalid_argument naming the unknown point.
  Vec2 resolve(const std::string& name) const;
  void validate() const;
};

/// A route point given either by layout name or by explicit coordinates.
struct WaypointRef {
  std::string name;
  std::optional<Vec2> point;

  static WaypointRef named(std::string name) { return {std::move(name), std::nullopt}; }
  static WaypointRef at(double x, double y) { return {"", Vec2(x, y)}; }

  Vec2 resolve(const LayoutTable& layout) const;
  std::string label() const;
};

struct PedestrianRoute {
  std::vector<WaypointRef> waypoints;
  double preferred_speed = kDefaultPedestrianSpeed;
  double start_delay = 0.0;
};

struct ScenarioSpec {
  std::string name;
  WaypointRef robot_start = WaypointRef::named("SP");
  std::optional<double> start_heading;  // defaults to the bearing towards the goal
  WaypointRef robot_goal = WaypointRef::named("GP2");
  std::vector<PedestrianRoute> pedestrians;
  double duration_max = 30.0;
  std::uint64_t seed = 0;
  LayoutTable layout = LayoutTable::defaults();

  void validate() const;
  RobotState start_state() const;
  Vec2 goal_point() const;
};

/// The ten scenes: three with one pedestrian, three with two, four with three.
std::vector<ScenarioSpec> builtin_scenarios();
std::vector<std::string> builtin_scenario_names();
/// Throws std::invalid_argument listing the valid names.
ScenarioSpec builtin_scenario(const std::string& name);

struct SimConfig {
  double dt = kDefaultDt;
  double dt_obs = kDefaultObservationDt;
  double goal_tolerance = 0.1;
  CrowdParams crowd;
  MpcProblem planner;                 // goal is filled in per scenario
  RepresentativeStrategy representative = RepresentativeStrategy::Mean;
  double inflation_scale = 2.0;
  int plant_substeps = 1;             // > 1 integrates the plant finer than the planner

  void validate() const;
};

/// Deterministic closed loop: observe, predict, plan, apply, advance, log.
/// Component errors end the run with a Failed verdict and a diagnostic.
SimLog run_closed_loop(const ScenarioSpec& scenario, const Predictor& predictor,
                       const SimConfig& config);

}  // namespace crowdnav
