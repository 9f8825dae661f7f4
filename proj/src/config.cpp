#include "crowdnav/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <fmt/format.h>

namespace crowdnav {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ConfigError(fmt::format("config {}: {}", where, what));
}

void read_value(const json& j, double& out, const std::string& where) {
  if (!j.is_number()) fail(where, "expected a number");
  out = j.get<double>();
}
void read_value(const json& j, int& out, const std::string& where) {
  if (!j.is_number_integer()) fail(where, "expected an integer");
  out = j.get<int>();
}
void read_value(const json& j, bool& out, const std::string& where) {
  if (!j.is_boolean()) fail(where, "expected true or false");
  out = j.get<bool>();
}
void read_value(const json& j, std::string& out, const std::string& where) {
  if (!j.is_string()) fail(where, "expected a string");
  out = j.get<std::string>();
}
void read_value(const json& j, std::uint64_t& out, const std::string& where) {
  if (!j.is_number_unsigned()) fail(where, "expected a non-negative integer");
  out = j.get<std::uint64_t>();
}
void read_value(const json& j, Vec2& out, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    fail(where, "expected [x, y]");
  }
  out = {j[0].get<double>(), j[1].get<double>()};
}
void read_value(const json& j, Bounds& out, const std::string& where) {
  Vec2 v;
  read_value(j, v, where);
  if (v.x() > v.y()) fail(where, "lower bound above upper bound");
  out = {v.x(), v.y()};
}
template <int N>
void read_value(const json& j, Eigen::Matrix<double, N, 1>& out, const std::string& where) {
  if (!j.is_array() || j.size() != N) fail(where, fmt::format("expected {} numbers", N));
  for (int i = 0; i < N; ++i) {
    if (!j[i].is_number()) fail(where, fmt::format("expected {} numbers", N));
    out[i] = j[i].get<double>();
  }
}
void read_value(const json& j, std::vector<int>& out, const std::string& where) {
  if (!j.is_array()) fail(where, "expected a list of integers");
  out.clear();
  for (const auto& e : j) {
    if (!e.is_number_integer()) fail(where, "expected a list of integers");
    out.push_back(e.get<int>());
  }
}

// One JSON object; rejects keys that were never read.
class Section {
 public:
  Section(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) fail(where_, "expected an object");
  }
  ~Section() = default;

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    if (it != obj_.end()) read_value(*it, out, where_ + "." + key);
  }

  const json* child(const char* key) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string path(const char* key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) fail(where_, "unknown key '" + key + "'");
    }
  }

 private:
  const json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

void read_crowd(const json& j, CrowdParams& c, const std::string& where) {
  Section s(j, where);
  s.get("repulsion", c.repulsion);
  s.get("waypoint_tolerance", c.waypoint_tolerance);
  s.get("relaxation_time", c.relaxation_time);
  s.get("repulsion_strength", c.repulsion_strength);
  s.get("repulsion_range", c.repulsion_range);
  s.get("repulsion_cutoff", c.repulsion_cutoff);
  s.get("tangential_bias", c.tangential_bias);
  s.get("max_repulsion_speed", c.max_repulsion_speed);
  s.get("pedestrian_radius", c.pedestrian_radius);
  s.get("robot_radius", c.robot_radius);
  s.finish();
}

json crowd_to_json(const CrowdParams& c) {
  return {{"repulsion", c.repulsion},
          {"waypoint_tolerance", c.waypoint_tolerance},
          {"relaxation_time", c.relaxation_time},
          {"repulsion_strength", c.repulsion_strength},
          {"repulsion_range", c.repulsion_range},
          {"repulsion_cutoff", c.repulsion_cutoff},
          {"tangential_bias", c.tangential_bias},
          {"max_repulsion_speed", c.max_repulsion_speed},
          {"pedestrian_radius", c.pedestrian_radius},
          {"robot_radius", c.robot_radius}};
}

void read_planner(const json& j, MpcProblem& p, const std::string& where) {
  Section s(j, where);
  s.get("horizon", p.horizon);
  s.get("dt", p.dt);
  s.get("state_weight", p.state_weight);
  s.get("input_weight", p.input_weight);
  s.get("terminal_weight", p.terminal_weight);
  s.get("v_bounds", p.limits.v);
  s.get("omega_bounds", p.limits.omega);
  s.get("robot_radius", p.robot_radius);
  s.get("ped_radius", p.ped_radius);
  s.get("slack_weight", p.slack_weight);
  s.get("safety_margin", p.safety_margin);
  s.get("max_iters", p.max_iters);
  s.get("solve_budget", p.solve_budget);
  s.get("tolerance", p.tolerance);
  s.get("swerve_seeds", p.swerve_seeds);
  s.finish();
}

json planner_to_json(const MpcProblem& p) {
  auto vec = [](const auto& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
  };
  return {{"horizon", p.horizon},
          {"dt", p.dt},
          {"state_weight", vec(p.state_weight)},
          {"input_weight", vec(p.input_weight)},
          {"terminal_weight", vec(p.terminal_weight)},
          {"v_bounds", {p.limits.v.lo, p.limits.v.hi}},
          {"omega_bounds", {p.limits.omega.lo, p.limits.omega.hi}},
          {"robot_radius", p.robot_radius},
          {"ped_radius", p.ped_radius},
          {"slack_weight", p.slack_weight},
          {"safety_margin", p.safety_margin},
          {"max_iters", p.max_iters},
          {"solve_budget", p.solve_budget},
          {"tolerance", p.tolerance},
          {"swerve_seeds", p.swerve_seeds}};
}

void read_sim(const json& j, SimConfig& c, const std::string& where) {
  Section s(j, where);
  s.get("dt", c.dt);
  s.get("dt_obs", c.dt_obs);
  s.get("goal_tolerance", c.goal_tolerance);
  s.get("plant_substeps", c.plant_substeps);
  s.get("inflation_scale", c.inflation_scale);
  std::string rep = to_string(c.representative);
  s.get("representative", rep);
  try {
    c.representative = representative_strategy_from_string(rep);
  } catch (const std::invalid_argument& e) {
    fail(s.path("representative"), e.what());
  }
  if (const json* crowd = s.child("crowd")) read_crowd(*crowd, c.crowd, s.path("crowd"));
  s.finish();
}

WaypointRef read_waypoint(const json& j, const std::string& where) {
  if (j.is_string()) return WaypointRef::named(j.get<std::string>());
  Vec2 p;
  read_value(j, p, where);
  return WaypointRef::at(p.x(), p.y());
}

json waypoint_to_json(const WaypointRef& w) {
  if (w.point) return json::array({w.point->x(), w.point->y()});
  return w.name;
}

ScenarioSpec read_scenario(const json& j, const LayoutTable& layout, const std::string& where) {
  Section s(j, where);
  ScenarioSpec spec;
  spec.layout = layout;
  s.get("name", spec.name);
  if (spec.name.empty()) fail(where, "scenario needs a name");
  if (const json* w = s.child("start")) spec.robot_start = read_waypoint(*w, s.path("start"));
  if (const json* w = s.child("goal")) spec.robot_goal = read_waypoint(*w, s.path("goal"));
  double heading = 0.0;
  if (s.child("start_heading")) {
    s.get("start_heading", heading);
    spec.start_heading = heading;
  }
  s.get("duration_max", spec.duration_max);
  s.get("seed", spec.seed);
  if (const json* peds = s.child("pedestrians")) {
    if (!peds->is_array()) fail(s.path("pedestrians"), "expected a list");
    for (std::size_t i = 0; i < peds->size(); ++i) {
      const std::string pw = fmt::format("{}[{}]", s.path("pedestrians"), i);
      Section ps((*peds)[i], pw);
      PedestrianRoute route;
      const json* r = ps.child("route");
      if (!r || !r->is_array() || r->empty()) fail(pw, "route must be a non-empty list");
      for (std::size_t k = 0; k < r->size(); ++k) {
        route.waypoints.push_back(read_waypoint((*r)[k], fmt::format("{}.route[{}]", pw, k)));
      }
      ps.get("speed", route.preferred_speed);
      ps.get("delay", route.start_delay);
      ps.finish();
      spec.pedestrians.push_back(std::move(route));
    }
  }
  s.finish();
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    fail(where, e.what());
  }
  return spec;
}

void read_training(const json& j, AppConfig& c, const std::string& where) {
  Section s(j, where);
  s.get("learning_rate", c.training.learning_rate);
  s.get("imle_draws", c.training.imle_draws);
  s.get("epochs", c.training.epochs);
  s.get("batch_size", c.training.batch_size);
  s.get("early_stop_patience", c.training.early_stop_patience);
  s.get("validation_fraction", c.training.validation_fraction);
  if (const json* m = s.child("model")) {
    Section ms(*m, s.path("model"));
    ms.get("hidden", c.model_shape.hidden);
    ms.get("noise_dim", c.model_shape.noise_dim);
    ms.get("samples", c.model_shape.num_samples);
    ms.finish();
  }
  if (const json* g = s.child("synthetic")) {
    Section gs(*g, s.path("synthetic"));
    auto& sc = c.synthetic;
    gs.get("episodes", sc.episodes);
    gs.get("pedestrians_per_episode", sc.pedestrians_per_episode);
    gs.get("arena_half_width", sc.arena_half_width);
    gs.get("arena_half_height", sc.arena_half_height);
    gs.get("speed_min", sc.speed_min);
    gs.get("speed_max", sc.speed_max);
    gs.get("intermediate_waypoints", sc.intermediate_waypoints);
    gs.get("max_start_delay", sc.max_start_delay);
    gs.get("repulsion", sc.repulsion);
    gs.get("observation_noise", sc.observation_noise);
    gs.get("episode_duration", sc.episode_duration);
    gs.get("sim_dt", sc.sim_dt);
    gs.get("window_stride", sc.window_stride);
    gs.get("arrival_margin", sc.arrival_margin);
    gs.get("dwell_time", sc.dwell_time);
    gs.finish();
  }
  s.finish();
}

}  // namespace

std::vector<ScenarioSpec> AppConfig::all_scenarios() const {
  std::vector<ScenarioSpec> out = builtin_scenarios();
  for (auto& s : out) s.layout = layout;
  for (const auto& custom : scenarios) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const ScenarioSpec& s) { return s.name == custom.name; });
    if (it != out.end()) {
      *it = custom;
    } else {
      out.push_back(custom);
    }
  }
  return out;
}

ScenarioSpec AppConfig::scenario(const std::string& name) const {
  const auto all = all_scenarios();
  std::string valid;
  for (const auto& s : all) {
    if (s.name == name) return s;
    valid += (valid.empty() ? "" : ", ") + s.name;
  }
  throw std::invalid_argument("unknown scenario '" + name + "' (valid: " + valid + ")");
}

AppConfig parse_config(const json& doc) {
  AppConfig c;
  Section root(doc, "root");
  std::string schema;
  root.get("schema", schema);
  if (schema != kConfigSchema) {
    fail("root.schema", fmt::format("expected '{}', got '{}'", kConfigSchema, schema));
  }
  if (const json* layout = root.child("layout")) {
    if (!layout->is_object()) fail("root.layout", "expected an object");
    for (const auto& [name, value] : layout->items()) {
      Vec2 p;
      read_value(value, p, "root.layout." + name);
      c.layout.points[name] = p;
    }
  }
  if (const json* sim = root.child("sim")) read_sim(*sim, c.sim, "root.sim");
  if (const json* planner = root.child("planner")) read_planner(*planner, c.sim.planner, "root.planner");
  if (const json* cv = root.child("cv")) {
    Section s(*cv, "root.cv");
    s.get("samples", c.cv.num_samples);
    s.get("sigma_v", c.cv.sigma_v);
    s.get("history_length", c.cv.history_length);
    s.get("horizon", c.cv.horizon);
    s.finish();
  }
  if (const json* model = root.child("model_path")) {
    std::string path;
    read_value(*model, path, "root.model_path");
    c.model_path = path;
  }
  if (const json* training = root.child("training")) read_training(*training, c, "root.training");
  if (const json* scen = root.child("scenarios")) {
    if (!scen->is_array()) fail("root.scenarios", "expected a list");
    std::set<std::string> names;
    for (std::size_t i = 0; i < scen->size(); ++i) {
      auto spec = read_scenario((*scen)[i], c.layout, fmt::format("root.scenarios[{}]", i));
      if (!names.insert(spec.name).second) fail("root.scenarios", "duplicate name '" + spec.name + "'");
      c.scenarios.push_back(std::move(spec));
    }
  }
  root.finish();

  c.cv.dt = c.sim.dt_obs;
  c.model_shape.dt = c.sim.dt_obs;
  c.model_shape.history_length = c.cv.history_length;
  c.model_shape.horizon = c.cv.horizon;
  c.synthetic.dt_obs = c.sim.dt_obs;
  c.synthetic.history_length = c.cv.history_length;
  c.synthetic.horizon = c.cv.horizon;
  c.synthetic.crowd = c.sim.crowd;
  try {
    c.layout.validate();
    c.sim.validate();
    c.training.validate();
    for (auto& s : c.all_scenarios()) s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

AppConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

json sim_config_to_json(const SimConfig& c) {
  return {{"dt", c.dt},
          {"dt_obs", c.dt_obs},
          {"goal_tolerance", c.goal_tolerance},
          {"plant_substeps", c.plant_substeps},
          {"representative", to_string(c.representative)},
          {"inflation_scale", c.inflation_scale},
          {"crowd", crowd_to_json(c.crowd)},
          {"planner", planner_to_json(c.planner)}};
}

json scenario_to_json(const ScenarioSpec& s) {
  json peds = json::array();
  for (const auto& r : s.pedestrians) {
    json route = json::array();
    for (const auto& w : r.waypoints) route.push_back(waypoint_to_json(w));
    peds.push_back({{"route", route}, {"speed", r.preferred_speed}, {"delay", r.start_delay}});
  }
  json j = {{"name", s.name},
            {"start", waypoint_to_json(s.robot_start)},
            {"goal", waypoint_to_json(s.robot_goal)},
            {"duration_max", s.duration_max},
            {"seed", s.seed},
            {"pedestrians", peds}};
  if (s.start_heading) j["start_heading"] = *s.start_heading;
  return j;
}

json to_json(const AppConfig& c) {
  json layout = json::object();
  for (const auto& [name, p] : c.layout.points) layout[name] = {p.x(), p.y()};
  json sim = sim_config_to_json(c.sim);
  json planner = sim["planner"];
  sim.erase("planner");
  json scenarios = json::array();
  for (const auto& s : c.scenarios) scenarios.push_back(scenario_to_json(s));
  const auto& g = c.synthetic;
  json j = {
      {"schema", kConfigSchema},
      {"layout", layout},
      {"sim", sim},
      {"planner", planner},
      {"cv",
       {{"samples", c.cv.num_samples},
        {"sigma_v", c.cv.sigma_v},
        {"history_length", c.cv.history_length},
        {"horizon", c.cv.horizon}}},
      {"training",
       {{"learning_rate", c.training.learning_rate},
        {"imle_draws", c.training.imle_draws},
        {"epochs", c.training.epochs},
        {"batch_size", c.training.batch_size},
        {"early_stop_patience", c.training.early_stop_patience},
        {"validation_fraction", c.training.validation_fraction},
        {"model",
         {{"hidden", c.model_shape.hidden},
          {"noise_dim", c.model_shape.noise_dim},
          {"samples", c.model_shape.num_samples}}},
        {"synthetic",
         {{"episodes", g.episodes},
          {"pedestrians_per_episode", g.pedestrians_per_episode},
          {"arena_half_width", g.arena_half_width},
          {"arena_half_height", g.arena_half_height},
          {"speed_min", g.speed_min},
          {"speed_max", g.speed_max},
          {"intermediate_waypoints", g.intermediate_waypoints},
          {"max_start_delay", g.max_start_delay},
          {"repulsion", g.repulsion},
          {"observation_noise", g.observation_noise},
          {"episode_duration", g.episode_duration},
          {"sim_dt", g.sim_dt},
          {"window_stride", g.window_stride},
          {"arrival_margin", g.arrival_margin},
          {"dwell_time", g.dwell_time}}}}},
      {"scenarios", scenarios}};
  if (c.model_path) j["model_path"] = *c.model_path;
  return j;
}

}  // namespace crowdnav
