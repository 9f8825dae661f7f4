#include "crowdnav/simulation.hpp"

#include <cmath>
#include <exception>
#include <stdexcept>

#include <fmt/format.h>

#include "crowdnav/config.hpp"

namespace crowdnav {

std::string to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::GoalReached: return "goal-reached";
    case Verdict::Timeout: return "timeout";
    case Verdict::Collision: return "collision";
    case Verdict::Failed: return "failed";
  }
  return "unknown";
}

Verdict verdict_from_string(const std::string& text) {
  for (auto v : {Verdict::GoalReached, Verdict::Timeout, Verdict::Collision, Verdict::Failed}) {
    if (to_string(v) == text) return v;
  }
  throw std::invalid_argument("unknown verdict '" + text + "'");
}

LayoutTable LayoutTable::defaults() {
  LayoutTable t;
  t.points = {
      {"SP", {0.0, 0.0}},     {"GP1", {-4.0, 8.0}},   {"GP2", {0.0, 8.0}},
      {"GP3", {4.0, 8.0}},    {"Red1", {-5.0, 4.0}},  {"Red2", {5.0, 4.0}},
      {"Green1", {-5.0, 9.0}}, {"Green2", {5.0, 1.0}}, {"Green3", {-5.0, 1.0}},
      {"Green4", {5.0, 9.0}}, {"Black1", {1.0, 9.0}}, {"Black2", {1.0, -1.0}},
      {"Black3", {-2.0, 9.0}}, {"Black4", {-2.0, -1.0}}, {"Black5", {0.0, -1.0}},
  };
  return t;
}

Vec2 LayoutTable::resolve(const std::string& name) const {
  const auto it = points.find(name);
  if (it == points.end()) throw std::invalid_argument("unknown layout point '" + name + "'");
  return it->second;
}

void LayoutTable::validate() const {
  for (const auto& [name, p] : points) {
    if (name.empty()) throw std::invalid_argument("layout: empty point name");
    if (!p.allFinite()) throw std::invalid_argument("layout: non-finite point '" + name + "'");
  }
}

Vec2 WaypointRef::resolve(const LayoutTable& layout) const {
  if (point) return *point;
  return layout.resolve(name);
}

std::string WaypointRef::label() const {
  if (point) return fmt::format("({}, {})", point->x(), point->y());
  return name;
}

void ScenarioSpec::validate() const {
  layout.validate();
  if (!(duration_max > 0.0)) throw std::invalid_argument("scenario '" + name + "': duration_max must be > 0");
  robot_start.resolve(layout);
  robot_goal.resolve(layout);
  for (const auto& route : pedestrians) {
    if (route.waypoints.empty()) {
      throw std::invalid_argument("scenario '" + name + "': pedestrian route without waypoints");
    }
    for (const auto& w : route.waypoints) w.resolve(layout);
    if (!(route.preferred_speed > 0.0) || route.start_delay < 0.0) {
      throw std::invalid_argument("scenario '" + name + "': bad pedestrian speed or delay");
    }
  }
}

RobotState ScenarioSpec::start_state() const {
  const Vec2 s = robot_start.resolve(layout);
  const Vec2 g = robot_goal.resolve(layout);
  const double heading = start_heading ? *start_heading : std::atan2(g.y() - s.y(), g.x() - s.x());
  return {s.x(), s.y(), wrap_angle(heading)};
}

Vec2 ScenarioSpec::goal_point() const { return robot_goal.resolve(layout); }

namespace {

ScenarioSpec scene(int index, const char* goal,
                   std::initializer_list<std::pair<const char*, const char*>> routes) {
  ScenarioSpec s;
  s.name = fmt::format("scene{}", index);
  s.robot_goal = WaypointRef::named(goal);
  s.seed = static_cast<std::uint64_t>(index);
  for (const auto& [from, to] : routes) {
    PedestrianRoute r;
    r.waypoints = {WaypointRef::named(from), WaypointRef::named(to)};
    s.pedestrians.push_back(std::move(r));
  }
  return s;
}

}  // namespace

std::vector<ScenarioSpec> builtin_scenarios() {
  return {
      scene(1, "GP1", {{"Red1", "Red2"}}),
      scene(2, "GP2", {{"GP2", "Black5"}}),
      scene(3, "GP3", {{"Green2", "Green1"}}),
      scene(4, "GP1", {{"Red2", "Red1"}, {"Black1", "Black2"}}),
      scene(5, "GP2", {{"Red1", "Red2"}, {"Green4", "Green3"}}),
      scene(6, "GP3", {{"Black4", "Black3"}, {"Green3", "Green4"}}),
      scene(7, "GP1", {{"Black1", "Black2"}, {"GP2", "Black5"}, {"Green4", "Green3"}}),
      scene(8, "GP2", {{"Red2", "Red1"}, {"Red1", "Red2"}, {"Black1", "Black2"}}),
      scene(9, "GP1", {{"Black1", "Black2"}, {"Green2", "Black1"}, {"Red1", "Red2"}}),
      scene(10, "GP2", {{"Black4", "Black3"}, {"Green1", "Black2"}, {"GP2", "Black5"}}),
  };
}

std::vector<std::string> builtin_scenario_names() {
  std::vector<std::string> names;
  for (const auto& s : builtin_scenarios()) names.push_back(s.name);
  return names;
}

ScenarioSpec builtin_scenario(const std::string& name) {
  for (auto& s : builtin_scenarios()) {
    if (s.name == name) return s;
  }
  std::string valid;
  for (const auto& n : builtin_scenario_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw std::invalid_argument("unknown scenario '" + name + "' (valid: " + valid + ")");
}

void SimConfig::validate() const {
  if (!(dt > 0.0) || !(dt_obs > 0.0)) throw std::invalid_argument("SimConfig: dt must be > 0");
  const double ratio = dt_obs / dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 || std::round(ratio) < 1.0) {
    throw std::invalid_argument("SimConfig: dt_obs must be a whole multiple of dt");
  }
  if (!(goal_tolerance > 0.0)) throw std::invalid_argument("SimConfig: goal_tolerance must be > 0");
  if (plant_substeps < 1) throw std::invalid_argument("SimConfig: plant_substeps must be >= 1");
  if (!(inflation_scale >= 0.0)) throw std::invalid_argument("SimConfig: inflation_scale must be >= 0");
  planner.validate();
  if (std::abs(planner.dt - dt) > 1e-12) {
    throw std::invalid_argument("SimConfig: planner dt must equal the control period");
  }
}

namespace {

ObstacleForecast build_forecast(std::span<const PredictionSet> preds,
                                std::span<const Pedestrian> peds, double offset,
                                const SimConfig& config) {
  const int n = config.planner.horizon;
  ObstacleForecast fc;
  const bool inflate = config.representative == RepresentativeStrategy::Inflated;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const PredictionSet grid = resample_to_grid(preds[i], config.dt, n, offset);
    const Representative rep = select_representative(grid, config.representative,
                                                     config.inflation_scale);
    Path2 path;
    path.reserve(static_cast<std::size_t>(n) + 1);
    path.push_back(peds[i].position);  // perception is exact at the current instant
    path.insert(path.end(), rep.trajectory.begin(), rep.trajectory.end());
    fc.positions.push_back(std::move(path));
    if (inflate) {
      std::vector<double> extra{0.0};
      extra.insert(extra.end(), rep.extra_radius.begin(), rep.extra_radius.end());
      fc.extra_radius.push_back(std::move(extra));
    }
  }
  return fc;
}

}  // namespace

SimLog run_closed_loop(const ScenarioSpec& scenario, const Predictor& predictor,
                       const SimConfig& config) {
  scenario.validate();
  config.validate();
  if (std::abs(predictor.dt() - config.dt_obs) > 1e-12) {
    throw std::invalid_argument(fmt::format(
        "predictor rate {} s does not match the observation interval {} s", predictor.dt(),
        config.dt_obs));
  }

  SimLog log;
  log.scenario = scenario.name;
  log.predictor = predictor.name();
  log.seed = scenario.seed;
  log.dt = config.dt;
  log.robot_radius = config.planner.robot_radius;
  log.ped_radius = config.planner.ped_radius;
  log.goal = scenario.goal_point();
  log.goal_tolerance = config.goal_tolerance;
  log.planner_config = sim_config_to_json(config).dump();

  RobotState robot = scenario.start_state();
  MpcProblem problem = config.planner;
  problem.goal = {log.goal.x(), log.goal.y(), robot.theta};

  std::vector<Pedestrian> peds;
  for (std::size_t i = 0; i < scenario.pedestrians.size(); ++i) {
    const auto& route = scenario.pedestrians[i];
    Path2 points;
    for (const auto& w : route.waypoints) points.push_back(w.resolve(scenario.layout));
    peds.push_back(Pedestrian::spawn(static_cast<int>(i), std::move(points),
                                     route.preferred_speed, route.start_delay));
    log.ped_ids.push_back(static_cast<int>(i));
  }

  const int obs_every = static_cast<int>(std::lround(config.dt_obs / config.dt));
  const int max_cycles = static_cast<int>(std::ceil(scenario.duration_max / config.dt - 1e-9));
  const double contact = config.planner.safety_distance();
  std::vector<Path2> observed(peds.size());
  std::vector<PredictionSet> preds;
  int anchor = 0;
  std::optional<MpcSolution> warm;

  try {
    for (int k = 0;; ++k) {
      CycleRecord rec;
      rec.cycle = k;
      rec.time = k * config.dt;
      rec.robot = robot;
      for (const auto& p : peds) rec.pedestrians.push_back(p.position);

      bool collided = false;
      for (const auto& p : peds) {
        if ((p.position - robot.position()).norm() < contact) collided = true;
      }
      const bool at_goal = (robot.position() - log.goal).norm() <= config.goal_tolerance;
      if (collided || at_goal || k >= max_cycles) {
        log.verdict = collided ? Verdict::Collision
                      : at_goal ? Verdict::GoalReached
                                : Verdict::Timeout;
        log.cycles.push_back(std::move(rec));
        break;
      }

      if (k % obs_every == 0) {
        anchor = k;
        for (std::size_t i = 0; i < peds.size(); ++i) observed[i].push_back(peds[i].position);
      }
      std::vector<PedestrianHistory> histories;
      for (std::size_t i = 0; i < peds.size(); ++i) {
        histories.push_back(pad_history(observed[i], predictor.history_length(), peds[i].id,
                                        config.dt_obs));
      }
      preds = predict_crowd_omp(predictor, histories, static_cast<std::uint64_t>(anchor));
      if (k == anchor) {
        for (std::size_t i = 0; i < preds.size(); ++i) {
          if (!preds[i].all_finite()) {
            throw std::runtime_error(fmt::format("predictor returned non-finite positions for pedestrian {}", i));
          }
          rec.predictions.push_back({anchor, histories[i].observed_count, preds[i]});
        }
      }

      const ObstacleForecast forecast =
          build_forecast(preds, peds, (k - anchor) * config.dt, config);
      MpcSolution sol = solve(problem, robot, forecast, warm ? &*warm : nullptr);
      log.solve_times.push_back(sol.solve_time);

      const ControlInput u = sol.controls.front();
      rec.control = u;
      rec.solve = SolveSummary{sol.cost, sol.max_constraint_violation, sol.iterations, sol.status,
                               sol.predicted_states[1]};
      log.cycles.push_back(std::move(rec));

      const Vec2 robot_before = robot.position();
      robot = config.plant_substeps == 1
                  ? rk4_step(robot, u, config.dt)
                  : rk4_substepped(robot, u, config.dt, config.plant_substeps);
      step_pedestrians(peds, robot_before, k * config.dt, config.dt, config.crowd);
      warm = std::move(sol);
    }
  } catch (const std::exception& e) {
    log.verdict = Verdict::Failed;
    log.diagnostic = e.what();
  }
  return log;
}

}  // namespace crowdnav
