// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>
#include <json.hpp>

#include "crowdnav/commands.hpp"
#include "crowdnav/config.hpp"
#include "crowdnav/crowd.hpp"
#include "crowdnav/dynamics.hpp"
#include "crowdnav/learned_predictor.hpp"
#include "crowdnav/metrics.hpp"
#include "crowdnav/mpc.hpp"
#include "crowdnav/report.hpp"
#include "crowdnav/simlog_io.hpp"
#include "crowdnav/simulation.hpp"
#include "test_support.hpp"

using namespace crowdnav;
using namespace crowdnav::testing;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string first_line(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

std::string joined(const std::vector<std::string>& cols) {
  std::string out;
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
  return out;
}

AppConfig defaults() { return parse_config({{"schema", kConfigSchema}}); }

// State shared between criteria: the trained model and the full suite.
struct Shared {
  std::filesystem::path model_path;
  std::vector<SimLog> suite;
  std::filesystem::path work = scratch_dir("acceptance");
};

Outcome metric_oracle() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> horizon(1, 12), samples(2, 20);
  double worst = 0.0;
  const auto t0 = Clock::now();
  for (int i = 0; i < 1000; ++i) {
    const int n = horizon(rng);
    const auto set = random_set(rng, samples(rng), n);
    const auto truth = random_path(rng, n);
    const auto got = score_prediction(set, truth);
    const auto want = oracle_scores(set, truth, kCovarianceEpsilon);
    worst = std::max({worst, rel_err(got.ade, want.ade), rel_err(got.fde, want.fde),
                      rel_err(got.amd, want.amd), rel_err(got.amv, want.amv)});
  }
  const double elapsed = seconds_since(t0);
  return {worst < 1e-9 && elapsed < 10.0,
          fmt::format("max rel err {:.3g}, {:.2f} s for 1000 instances", worst, elapsed)};
}

Outcome rk4_order() {
  const ControlInput u{1.0, 1.0};
  std::vector<double> err;
  for (double dt : {0.1, 0.05, 0.025}) {
    RobotState s{0.0, 0.0, 0.0};
    const int steps = static_cast<int>(std::lround(1.0 / dt));
    for (int k = 0; k < steps; ++k) s = rk4_step(s, u, dt);
    err.push_back(std::hypot(s.x - std::sin(1.0), s.y - (1.0 - std::cos(1.0))));
  }
  const double r1 = err[0] / err[1], r2 = err[1] / err[2];
  const bool ok = r1 >= 12 && r1 <= 20 && r2 >= 12 && r2 <= 20;
  return {ok, fmt::format("error ratios {:.2f}, {:.2f}", r1, r2)};
}

Outcome cv_exactness() {
  ScenarioSpec s;
  s.name = "uniform";
  s.robot_goal = WaypointRef::named("GP2");
  PedestrianRoute r;
  r.waypoints = {WaypointRef::at(-30, 5), WaypointRef::at(30, 5)};
  r.preferred_speed = 1.0;
  s.pedestrians.push_back(r);
  s.duration_max = 12.0;
  CvPredictorConfig c;
  c.sigma_v = 0.0;
  const auto log = run_closed_loop(s, CvPredictor(c), SimConfig{});
  const auto b = aggregate_open_loop(std::vector<SimLog>{log});
  if (b.empty() || b[0].samples == 0) return {false, "no scorable predictions"};
  return {b[0].scores.ade < 1e-9 && b[0].scores.fde < 1e-9,
          fmt::format("ADE {:.3g}, FDE {:.3g} over {} predictions", b[0].scores.ade,
                      b[0].scores.fde, b[0].samples)};
}

Outcome gradient_check() {
  const double eps = 1e-5;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::mt19937_64 rng(500 + trial);
    std::uniform_int_distribution<int> width(2, 7), depth(1, 2), hist(2, 5), hor(1, 4), nd(0, 3);
    ModelShape shape;
    shape.hidden.resize(static_cast<std::size_t>(depth(rng)));
    for (auto& w : shape.hidden) w = width(rng);
    shape.noise_dim = nd(rng);
    shape.horizon = hor(rng);
    shape.history_length = hist(rng);
    shape.num_samples = 5;
    auto m = make_model(shape, 77 + trial);
    std::normal_distribution<double> n(0.0, 0.2);
    for (auto& w : m.weights) w += n(rng);

    Path2 raw;
    Vec2 p(n(rng), n(rng));
    const Vec2 v(0.5 + n(rng), n(rng));
    for (int k = 0; k < m.history_length; ++k, p += v) raw.push_back(p);
    const auto h = pad_history(raw, m.history_length, 0, m.dt);
    Path2 truth;
    for (int t = 0; t < m.horizon; ++t, p += v) truth.push_back(p + Vec2(n(rng), n(rng)));
    std::vector<double> z(static_cast<std::size_t>(m.noise_dim));
    for (auto& x : z) x = 5.0 * n(rng);

    std::vector<double> grad(m.weights.size(), 0.0);
    accumulate_gradient(m, h, z, truth, grad);
    for (std::size_t j = 0; j < m.weights.size(); ++j) {
      auto a = m, b = m;
      a.weights[j] += eps;
      b.weights[j] -= eps;
      const double fd =
          (trajectory_mse(si_forward(a, h, z), truth) - trajectory_mse(si_forward(b, h, z), truth)) /
          (2 * eps);
      worst = std::max(worst, std::abs(fd - grad[j]) /
                                  std::max({std::abs(fd), std::abs(grad[j]), 1e-6}));
    }
  }
  return {worst < 1e-4, fmt::format("max rel err {:.3g} over 20 models", worst)};
}

Outcome training_efficacy(Shared& shared) {
  TrainOptions o;
  o.config = defaults();
  o.seed = 0;
  o.model_out = shared.work / "model.bin";
  const auto t0 = Clock::now();
  const auto out = cmd_train(o);
  const double train_s = seconds_since(t0);
  shared.model_path = out.model_path;
  const auto& r = out.report;
  const double v0 = r.validation_loss.front();
  const double vbest = r.validation_loss[static_cast<std::size_t>(r.best_epoch)];
  const double vlast = r.validation_loss.back();

  // Held-out episodes from an unrelated generator seed.
  CrowdGeneratorConfig held = o.config.synthetic;
  held.episodes = 20;
  const auto data = generate_synthetic_crowd(held, 999);
  const LearnedPredictor learned(load_model(out.model_path), 5);
  const CvPredictor cv(o.config.cv);
  double ade_l = 0.0, ade_c = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    ade_l += score_prediction(learned.predict(data[i].history, i), data[i].future).ade;
    ade_c += score_prediction(cv.predict(data[i].history, i), data[i].future).ade;
  }
  ade_l /= static_cast<double>(data.size());
  ade_c /= static_cast<double>(data.size());
  const bool ok = vbest < 0.7 * v0 && vlast < 0.7 * v0 && ade_l < ade_c;
  return {ok, fmt::format("val loss {:.4f} -> {:.4f} (best, epoch {}) / {:.4f} (last); held-out "
                          "ADE learned {:.4f} vs CV {:.4f} on {} windows; training {:.1f} s",
                          v0, vbest, r.best_epoch, vlast, ade_l, ade_c, data.size(), train_s)};
}

// Runs all scenarios with both predictors through cmd_run and keeps the logs.
Outcome suite_shape(Shared& shared) {
  RunOptions o;
  o.config = defaults();
  o.model = shared.model_path;
  o.out_dir = shared.work / "runs";
  const auto records = cmd_run(o);
  // solve times stay out of the written logs, so keep the in-memory runs
  shared.suite = run_suite(o);
  const auto written = load_log_dir(o.out_dir / "logs");
  ReportOptions ro;
  ro.logs_dir = o.out_dir;
  ro.out_dir = shared.work / "report";
  cmd_report(ro);
  const bool schema = first_line(ro.out_dir / "table2_open_loop.csv") == joined(comparison_columns()) &&
                first_line(ro.out_dir / "table4_closed_loop.csv") == joined(comparison_columns()) &&
                first_line(ro.out_dir / "runs.csv") == joined(run_columns());

  // Golden comparison on the canned log set.
  const auto canned = shared.work / "canned";
  std::filesystem::create_directories(canned / "logs");
  for (const auto& log : canned_set()) {
    save_simlog(canned / "logs" / (log.scenario + "_" + log.predictor + ".jsonl"), log);
  }
  ReportOptions co;
  co.logs_dir = canned;
  co.out_dir = canned / "report";
  cmd_report(co);
  bool golden = true;
  for (const char* f : {"table2_open_loop.csv", "table4_closed_loop.csv", "runs.csv",
                        "accel/canned1_cv.csv", "report.json"}) {
    golden &= slurp(co.out_dir / f) == slurp(golden_dir() / f) && !slurp(co.out_dir / f).empty();
  }

  return {records.size() == 20 && written.size() == 20 && schema && golden,
          fmt::format("{} runs, {} logs; table schema {}; golden files {}", records.size(),
                      written.size(), schema ? "ok" : "MISMATCH",
                      golden ? "match" : "DIFFER")};
}

Outcome planner_safety(const Shared& shared) {
  const auto base = stationary_obstacle();
  const auto sol = solve(base.problem, base.initial, base.forecast);

  auto lo = stationary_obstacle(1e3), hi = stationary_obstacle(1e4);
  lo.problem.safety_margin = 0.0;
  hi.problem.safety_margin = 0.0;
  const auto slo = solve(lo.problem, lo.initial, lo.forecast);
  const auto shi = solve(hi.problem, hi.initial, hi.forecast);
  const double ratio = slo.max_constraint_violation / std::max(shi.max_constraint_violation, 1e-300);

  const auto mlo = stationary_obstacle(1e3), mhi = stationary_obstacle(1e4);
  const auto tlo = solve(mlo.problem, mlo.initial, mlo.forecast);
  const auto thi = solve(mhi.problem, mhi.initial, mhi.forecast);
  const double pratio = tlo.max_penetration / std::max(thi.max_penetration, 1e-300);

  int collisions = 0;
  for (const auto& log : shared.suite) {
    collisions += min_distance(log, log.robot_radius, log.ped_radius).collision ||
                  log.verdict == Verdict::Collision;
  }
  const bool ok = sol.max_constraint_violation <= 1e-3 && slo.max_constraint_violation > 0.0 &&
                  ratio >= 2.0 && pratio >= 2.0 && shared.suite.size() == 20 && collisions == 0;
  return {ok, fmt::format("default violation {:.3g} m; x10 slack: raw violation {:.3g} -> {:.3g} "
                          "({:.1f}x), margin penetration {:.3g} -> {:.3g} ({:.1f}x); "
                          "{} collisions in {} runs",
                          sol.max_constraint_violation, slo.max_constraint_violation,
                          shi.max_constraint_violation, ratio, tlo.max_penetration,
                          thi.max_penetration, pratio, collisions, shared.suite.size())};
}

Outcome goal_attainment() {
  ScenarioSpec s;
  s.name = "free";
  s.robot_start = WaypointRef::at(0, 0);
  s.robot_goal = WaypointRef::at(3, 0);
  s.duration_max = 15.0;
  SimConfig c;
  const auto log = run_closed_loop(s, CvPredictor({}), c);
  const auto t = time_to_goal(log, Vec2(3, 0), log.goal_tolerance);
  if (!t) return {false, "goal not reached: " + to_string(log.verdict)};
  return {*t >= 3.0 && *t <= 5.0 && c.planner.limits.v.hi == 1.0,
          fmt::format("reached in {:.2f} s at v_max {}", *t, c.planner.limits.v.hi)};
}

Outcome realtime(const Shared& shared) {
  std::vector<double> times;
  for (const auto& log : shared.suite) {
    if (log.num_pedestrians() == 3) times.insert(times.end(), log.solve_times.begin(), log.solve_times.end());
  }
  if (times.empty()) return {false, "no solve times recorded"};
  double mean = 0.0;
  for (double t : times) mean += t;
  mean /= static_cast<double>(times.size());
  const double p95 = percentile95(times);

  const auto model = load_model(shared.model_path);
  const LearnedPredictor lp(model, 1);
  std::vector<PedestrianHistory> hist;
  for (int j = 0; j < 3; ++j) {
    Path2 raw;
    for (int k = 0; k < model.history_length; ++k) raw.emplace_back(0.4 * k, 1.0 * j);
    hist.push_back(pad_history(raw, model.history_length, j, model.dt));
  }
  std::vector<double> infer;
  for (int rep = 0; rep < 200; ++rep) {
    const auto t0 = Clock::now();
    const auto sets = predict_crowd_omp(lp, hist, static_cast<std::uint64_t>(rep));
    infer.push_back(seconds_since(t0));
    if (sets.size() != 3) return {false, "wrong prediction count"};
  }
  double infer_mean = 0.0;
  for (double t : infer) infer_mean += t;
  infer_mean /= static_cast<double>(infer.size());
  const double horizon = defaults().sim.planner.horizon;
  const bool ok = mean < 0.1 && p95 < 0.1 && infer_mean < 0.01 && percentile95(infer) < 0.01 &&
                  model.num_samples == 20 && horizon == 20;
  return {ok, fmt::format("solve mean {:.1f} ms, p95 {:.1f} ms over {} cycles (N={}); "
                          "inference 3 peds M={} mean {:.3f} ms, p95 {:.3f} ms",
                          1e3 * mean, 1e3 * p95, times.size(), horizon, model.num_samples,
                          1e3 * infer_mean, 1e3 * percentile95(infer))};
}

Outcome determinism(const Shared& shared) {
  RunOptions o;
  o.config = defaults();
  o.scenarios = {"scene8"};
  o.model = shared.model_path;
  bool same_logs = true;
  std::vector<std::filesystem::path> dirs;
  for (int pass = 0; pass < 2; ++pass) {
    o.out_dir = shared.work / fmt::format("det{}", pass);
    cmd_run(o);
    ReportOptions ro;
    ro.logs_dir = o.out_dir;
    ro.out_dir = o.out_dir / "report";
    cmd_report(ro);
    dirs.push_back(o.out_dir);
  }
  std::size_t compared = 0;
  for (const auto& sub : {"logs/scene8_cv.jsonl", "logs/scene8_learned.jsonl"}) {
    const auto a = slurp(dirs[0] / sub);
    same_logs &= !a.empty() && a == slurp(dirs[1] / sub);
    ++compared;
  }
  bool same_csv = true;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dirs[0] / "report")) {
    if (entry.path().extension() != ".csv") continue;
    const auto rel = std::filesystem::relative(entry.path(), dirs[0]);
    same_csv &= slurp(entry.path()) == slurp(dirs[1] / rel);
    ++compared;
  }
  return {same_logs && same_csv && compared > 4,
          fmt::format("{} files compared; logs {}, CSVs {}", compared,
                      same_logs ? "identical" : "DIFFER", same_csv ? "identical" : "DIFFER")};
}

Outcome mpc_mse_sanity() {
  ScenarioSpec s;
  s.name = "free";
  s.robot_start = WaypointRef::at(0, 0);
  s.robot_goal = WaypointRef::at(3, 0);
  s.duration_max = 15.0;
  const double matched = mpc_mse(run_closed_loop(s, CvPredictor({}), SimConfig{}));
  s.start_heading = 1.0;
  std::vector<double> mse;
  for (double dt : {0.1, 0.05}) {
    SimConfig c;
    c.dt = dt;
    c.planner.dt = dt;
    c.planner.horizon = static_cast<int>(std::lround(2.0 / dt));
    c.plant_substeps = 10;
    mse.push_back(mpc_mse(run_closed_loop(s, CvPredictor({}), c)));
  }
  const bool ok = matched < 1e-10 && mse[0] > 0 && mse[1] > 0 && mse[1] < mse[0];
  return {ok, fmt::format("matched {:.3g}; plant at dt/10: {:.3g} (dt 0.1) -> {:.3g} (dt 0.05)",
                          matched, mse[0], mse[1])};
}

}  // namespace

int main() {
  Shared shared;
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> check;
  };
  // Criteria 6 and 8 reuse the suite run by 10, which needs the model from 5.
  const std::vector<Criterion> order = {
      {1, "metric oracle", metric_oracle},
      {2, "RK4 order", rk4_order},
      {3, "CV exactness", cv_exactness},
      {4, "gradient check", gradient_check},
      {5, "training efficacy", [&] { return training_efficacy(shared); }},
      {10, "suite shape", [&] { return suite_shape(shared); }},
      {6, "planner safety", [&] { return planner_safety(shared); }},
      {7, "goal attainment", goal_attainment},
      {8, "real-time budget", [&] { return realtime(shared); }},
      {9, "determinism", [&] { return determinism(shared); }},
      {11, "mpc_mse sanity", mpc_mse_sanity},
  };
  std::vector<std::pair<int, std::string>> lines;
  int failures = 0;
  for (const auto& c : order) {
    Outcome out;
    try {
      out = c.check();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    failures += !out.pass;
    lines.emplace_back(c.id, fmt::format("{} [{}] {}: {}", out.pass ? "PASS" : "FAIL", c.id,
                                         c.name, out.detail));
  }
  std::sort(lines.begin(), lines.end());
  for (const auto& [id, line] : lines) fmt::print("{}\n", line);
  fmt::print("{} of {} criteria passed\n", lines.size() - failures, lines.size());
  return failures == 0 ? 0 : 1;
}
