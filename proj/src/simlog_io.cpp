#include "crowdnav/simlog_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "crowdnav/rng.hpp"

namespace crowdnav {

using nlohmann::json;

namespace {

json pose(const RobotState& s) { return json::array({s.x, s.y, s.theta}); }
json point(const Vec2& p) { return json::array({p.x(), p.y()}); }

// Non-finite doubles have no JSON spelling; null stands for +inf.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

[[noreturn]] void bad(int line, const std::string& what) {
  throw LogFormatError(fmt::format("simlog line {}: {}", line, what));
}

double as_double(const json& j, int line, const char* what) {
  if (j.is_null()) return std::numeric_limits<double>::infinity();
  if (!j.is_number()) bad(line, std::string(what) + " is not a number");
  return j.get<double>();
}

const json& field(const json& obj, const char* key, int line) {
  const auto it = obj.find(key);
  if (it == obj.end()) bad(line, std::string("missing '") + key + "'");
  return *it;
}

RobotState read_pose(const json& j, int line) {
  if (!j.is_array() || j.size() != 3) bad(line, "pose must be [x, y, theta]");
  return {as_double(j[0], line, "x"), as_double(j[1], line, "y"), as_double(j[2], line, "theta")};
}

Vec2 read_point(const json& j, int line) {
  if (!j.is_array() || j.size() != 2) bad(line, "point must be [x, y]");
  return {as_double(j[0], line, "x"), as_double(j[1], line, "y")};
}

json header_record(const SimLog& log) {
  json planner = log.planner_config.empty() ? json::object() : json::parse(log.planner_config);
  return {{"type", "header"},
          {"schema", kSimLogSchema},
          {"scenario", log.scenario},
          {"predictor", log.predictor},
          {"seed", log.seed},
          {"dt", log.dt},
          {"robot_radius", log.robot_radius},
          {"ped_radius", log.ped_radius},
          {"goal", point(log.goal)},
          {"goal_tolerance", log.goal_tolerance},
          {"ped_ids", log.ped_ids},
          {"config", planner}};
}

json cycle_record(const CycleRecord& c) {
  json peds = json::array();
  for (const auto& p : c.pedestrians) peds.push_back(point(p));
  json j = {{"type", "cycle"}, {"cycle", c.cycle}, {"time", c.time}, {"robot", pose(c.robot)},
            {"peds", peds}};
  if (c.control) j["control"] = json::array({c.control->v, c.control->omega});
  if (c.solve) {
    j["solve"] = {{"cost", number(c.solve->cost)},
                  {"max_violation", c.solve->max_violation},
                  {"iterations", c.solve->iterations},
                  {"status", to_string(c.solve->status)},
                  {"plan_next", pose(c.solve->plan_next)}};
  }
  if (!c.predictions.empty()) {
    json preds = json::array();
    for (const auto& sp : c.predictions) {
      json pts = json::array();
      for (const auto& p : sp.set.points()) {
        pts.push_back(p.x());
        pts.push_back(p.y());
      }
      preds.push_back({{"ped", sp.set.ped_id()},
                       {"anchor", sp.anchor_cycle},
                       {"observed", sp.observed_count},
                       {"samples", sp.set.num_samples()},
                       {"horizon", sp.set.horizon()},
                       {"dt", sp.set.dt_pred()},
                       {"origin", point(sp.set.origin())},
                       {"points", pts}});
    }
    j["predictions"] = preds;
  }
  return j;
}

CycleRecord read_cycle(const json& j, int line) {
  CycleRecord c;
  c.cycle = field(j, "cycle", line).get<int>();
  c.time = as_double(field(j, "time", line), line, "time");
  c.robot = read_pose(field(j, "robot", line), line);
  for (const auto& p : field(j, "peds", line)) c.pedestrians.push_back(read_point(p, line));
  if (const auto it = j.find("control"); it != j.end()) {
    const Vec2 u = read_point(*it, line);
    c.control = ControlInput{u.x(), u.y()};
  }
  if (const auto it = j.find("solve"); it != j.end()) {
    const json& s = *it;
    SolveSummary sum;
    sum.cost = as_double(field(s, "cost", line), line, "cost");
    sum.max_violation = as_double(field(s, "max_violation", line), line, "max_violation");
    sum.iterations = field(s, "iterations", line).get<int>();
    try {
      sum.status = mpc_status_from_string(field(s, "status", line).get<std::string>());
    } catch (const std::invalid_argument& e) {
      bad(line, e.what());
    }
    sum.plan_next = read_pose(field(s, "plan_next", line), line);
    c.solve = sum;
  }
  if (const auto it = j.find("predictions"); it != j.end()) {
    for (const auto& p : *it) {
      const int m = field(p, "samples", line).get<int>();
      const int n = field(p, "horizon", line).get<int>();
      if (m < 1 || n < 1) bad(line, "prediction with empty shape");
      PredictionSet set(field(p, "ped", line).get<int>(), m, n,
                        as_double(field(p, "dt", line), line, "dt"),
                        read_point(field(p, "origin", line), line));
      const json& pts = field(p, "points", line);
      if (!pts.is_array() || pts.size() != static_cast<std::size_t>(2 * m * n)) {
        bad(line, "prediction point count does not match its shape");
      }
      std::size_t k = 0;
      for (int s = 0; s < m; ++s) {
        for (int t = 0; t < n; ++t, k += 2) {
          set.at(s, t) = {as_double(pts[k], line, "point"), as_double(pts[k + 1], line, "point")};
        }
      }
      c.predictions.push_back({field(p, "anchor", line).get<int>(),
                               field(p, "observed", line).get<int>(), std::move(set)});
    }
  }
  return c;
}

}  // namespace

void write_simlog(std::ostream& out, const SimLog& log) {
  out << header_record(log).dump() << '\n';
  for (const auto& c : log.cycles) out << cycle_record(c).dump() << '\n';
  out << json{{"type", "verdict"}, {"verdict", to_string(log.verdict)},
              {"diagnostic", log.diagnostic}}
             .dump()
      << '\n';
}

SimLog read_simlog(std::istream& in) {
  SimLog log;
  std::string text;
  int line = 0;
  bool header = false;
  bool verdict = false;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    if (verdict) bad(line, "record after the verdict");
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      bad(line, e.what());
    }
    try {
      const std::string type = field(j, "type", line).get<std::string>();
      if (!header) {
        if (type != "header") bad(line, "first record must be the header");
        const std::string schema = field(j, "schema", line).get<std::string>();
        if (schema != kSimLogSchema) {
          bad(line, fmt::format("schema '{}' is not '{}'", schema, kSimLogSchema));
        }
        log.scenario = field(j, "scenario", line).get<std::string>();
        log.predictor = field(j, "predictor", line).get<std::string>();
        log.seed = field(j, "seed", line).get<std::uint64_t>();
        log.dt = as_double(field(j, "dt", line), line, "dt");
        log.robot_radius = as_double(field(j, "robot_radius", line), line, "robot_radius");
        log.ped_radius = as_double(field(j, "ped_radius", line), line, "ped_radius");
        log.goal = read_point(field(j, "goal", line), line);
        log.goal_tolerance = as_double(field(j, "goal_tolerance", line), line, "goal_tolerance");
        log.ped_ids = field(j, "ped_ids", line).get<std::vector<int>>();
        const json& cfg = field(j, "config", line);
        log.planner_config = cfg.empty() ? std::string() : cfg.dump();
        header = true;
      } else if (type == "cycle") {
        CycleRecord c = read_cycle(j, line);
        if (c.pedestrians.size() != log.ped_ids.size()) bad(line, "pedestrian count mismatch");
        if (c.cycle != static_cast<int>(log.cycles.size())) bad(line, "cycle index out of order");
        log.cycles.push_back(std::move(c));
      } else if (type == "verdict") {
        try {
          log.verdict = verdict_from_string(field(j, "verdict", line).get<std::string>());
        } catch (const std::invalid_argument& e) {
          bad(line, e.what());
        }
        log.diagnostic = field(j, "diagnostic", line).get<std::string>();
        verdict = true;
      } else {
        bad(line, "unknown record type '" + type + "'");
      }
    } catch (const json::exception& e) {
      bad(line, e.what());
    }
  }
  if (!header) throw LogFormatError("simlog: empty log");
  if (!verdict) throw LogFormatError("simlog: truncated log (no verdict record)");
  return log;
}

void save_simlog(const std::filesystem::path& path, const SimLog& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_simlog(out, log);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

SimLog load_simlog(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LogFormatError("cannot open " + path.string());
  try {
    return read_simlog(in);
  } catch (const LogFormatError& e) {
    throw LogFormatError(path.string() + ": " + e.what());
  }
}

std::string serialize_simlog(const SimLog& log) {
  std::ostringstream out;
  write_simlog(out, log);
  return out.str();
}

std::string simlog_digest(const SimLog& log) {
  return fmt::format("{:016x}", label_key(serialize_simlog(log)));
}

void write_simlog_csv(std::ostream& out, const SimLog& log) {
  out << "cycle,time,x,y,theta,v,omega,status";
  for (int id : log.ped_ids) out << fmt::format(",p{}_x,p{}_y", id, id);
  out << '\n';
  for (const auto& c : log.cycles) {
    out << fmt::format("{},{},{},{},{}", c.cycle, c.time, c.robot.x, c.robot.y, c.robot.theta);
    if (c.control) {
      out << fmt::format(",{},{}", c.control->v, c.control->omega);
    } else {
      out << ",,";
    }
    out << ',' << (c.solve ? to_string(c.solve->status) : std::string());
    for (const auto& p : c.pedestrians) out << fmt::format(",{},{}", p.x(), p.y());
    out << '\n';
  }
}

void write_timing_csv(std::ostream& out, const SimLog& log) {
  out << "cycle,solve_time\n";
  for (std::size_t i = 0; i < log.solve_times.size(); ++i) {
    out << fmt::format("{},{}\n", i, log.solve_times[i]);
  }
}

}  // namespace crowdnav
