#include "mcmp/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mcmp/cp_approx.hpp"
#include "mcmp/cp_mc.hpp"
#include "mcmp/mcmp.hpp"
#include "mcmp/scenario.hpp"

namespace mcmp {
namespace {

struct GlobalFlags {
  std::string scenario;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::int64_t particles = -1;
  double alpha = -1.0;
  int bisection_steps = -1;
  std::string out;
  std::string format = "csv";
  bool timing = false;
};

class Table {
 public:
  explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}
  void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }

  void write(std::ostream& os, const std::string& format) const {
    if (format == "csv") {
      write_row(os, header_);
      for (const auto& r : rows_) write_row(os, r);
      return;
    }
    std::vector<std::size_t> width(header_.size(), 0);
    auto grow = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size() && i < width.size(); ++i) width[i] = std::max(width[i], r[i].size());
    };
    grow(header_);
    for (const auto& r : rows_) grow(r);
    auto line = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size(); ++i) {
        os << (i ? "  " : "") << r[i];
        if (i + 1 < r.size()) os << std::string(width[i] - r[i].size(), ' ');
      }
      os << "\n";
    };
    line(header_);
    for (const auto& r : rows_) line(r);
  }

 private:
  static void write_row(std::ostream& os, const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
    os << "\n";
  }
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string num(std::int64_t v) { return std::to_string(v); }

const std::vector<std::string> kLeading = {"method", "waypoints", "particles", "p_hat", "std_err", "wall_ms"};

std::vector<std::string> header_with(std::vector<std::string> extra) {
  std::vector<std::string> h = kLeading;
  h.insert(h.end(), extra.begin(), extra.end());
  return h;
}

class Stopwatch {
 public:
  explicit Stopwatch(bool enabled) : enabled_(enabled), start_(std::chrono::steady_clock::now()) {}
  // Elapsed milliseconds, or 0 when timing is off so output stays reproducible.
  std::string ms() const {
    if (!enabled_) return "0";
    const auto d = std::chrono::steady_clock::now() - start_;
    return num(std::chrono::duration<double, std::milli>(d).count());
  }

 private:
  bool enabled_;
  std::chrono::steady_clock::time_point start_;
};

std::uint64_t seed_of(const GlobalFlags& g, const Scenario& s) { return g.seed_given ? g.seed : s.seed; }

// Nominal path used by estimate / sweep / oracle / simulate: the scenario's
// own path, or a planned one at `inflation` when none is given.
PlannedPath nominal_path_for(const Scenario& s, double inflation) {
  if (!s.nominal_path.empty()) return scenario_nominal_path(s);
  Workspace ws = s.workspace();
  ws.inflation = inflation;
  const PlannerCache cache = prepare(s.steering_model(), ws, s.planner_options());
  PlannedPath p = plan(cache, ws);
  if (p.feasible && s.planner.smoothing && s.dynamics == Dynamics::single_integrator) p = adaptive_shortcut(p, ws);
  return p;
}

// dt that gives about `waypoints` samples along the path (0 keeps the scenario dt).
double dt_for_waypoints(const Scenario& s, const PlannedPath& path, int waypoints) {
  if (waypoints <= 1) return 0.0;
  double duration = 0.0;
  if (s.dynamics == Dynamics::single_integrator) {
    duration = path_length(path.states) / s.speed;
  } else {
    for (double d : path.durations) duration += d;
  }
  return duration / (waypoints - 1);
}

int emit(const Table& t, const GlobalFlags& g, std::ostream& out, std::ostream& err) {
  if (g.out.empty()) {
    t.write(out, g.format);
    return kExitOk;
  }
  std::ofstream f(g.out, std::ios::binary);
  if (!f) {
    err << "error: cannot write " << g.out << "\n";
    return 1;
  }
  t.write(f, g.format);
  return kExitOk;
}

std::string label_additive(double p, const std::string& format) {
  if (format == "table" && p > 1.0) return num(p) + " (vacuous bound)";
  return num(p);
}

int cmd_estimate(const GlobalFlags& g, const Scenario& s, const std::string& methods, int waypoints, double inflation,
                 std::ostream& out, std::ostream& err) {
  const PlannedPath path = nominal_path_for(s, inflation);
  if (!path.feasible) {
    err << "error: no feasible nominal path\n";
    return kExitInfeasible;
  }
  const double dt = dt_for_waypoints(s, path, waypoints);
  const PathProblem problem = make_path_problem(s, path, dt);
  const std::int64_t m = g.particles > 0 ? g.particles : 2000;
  const std::uint64_t seed = seed_of(g, s);
  const auto wp = static_cast<std::int64_t>(problem.nominal.waypoints.size());
  Table t(header_with({}));
  std::stringstream list(methods);
  std::string method;
  while (std::getline(list, method, ',')) {
    const Stopwatch clock(g.timing);
    if (method == "simple" || method == "vr") {
      const CPEstimate e = method == "simple" ? simple_mc(problem, m, seed) : estimate_cp_vr(problem, m, seed);
      t.add({method, num(wp), num(e.m), num(e.p_hat), num(e.std_err), clock.ms()});
    } else if (method == "additive" || method == "multiplicative") {
      const CloseSet close = build_close_set(problem.nominal, problem.moments, problem.workspace);
      const WaypointCPs cps = pointwise_cps(problem.nominal, problem.moments, close);
      const Combination c = method == "additive" ? Combination::additive : Combination::multiplicative;
      const double p = combine(cps, c);
      t.add({method, num(wp), "0", method == "additive" ? label_additive(p, g.format) : num(p), "0", clock.ms()});
    } else {
      err << "error: unknown method '" << method << "' (expected simple, vr, additive, multiplicative)\n";
      return kExitUsage;
    }
  }
  return emit(t, g, out, err);
}

int cmd_oracle(const GlobalFlags& g, const Scenario& s, int waypoints, double inflation, std::ostream& out,
               std::ostream& err) {
  const PlannedPath path = nominal_path_for(s, inflation);
  if (!path.feasible) {
    err << "error: no feasible nominal path\n";
    return kExitInfeasible;
  }
  const PathProblem problem = make_path_problem(s, path, dt_for_waypoints(s, path, waypoints));
  const std::int64_t m = g.particles > 0 ? g.particles : 10000000;
  const Stopwatch clock(g.timing);
  const CPEstimate e = simple_mc(problem, m, seed_of(g, s));
  Table t(header_with({}));
  t.add({"simple", num(static_cast<std::int64_t>(problem.nominal.waypoints.size())), num(e.m), num(e.p_hat),
         num(e.std_err), clock.ms()});
  return emit(t, g, out, err);
}

int cmd_sweep(const GlobalFlags& g, const Scenario& s, int min_wp, int max_wp, double inflation, std::ostream& out,
              std::ostream& err) {
  if (min_wp < 2 || max_wp < min_wp) {
    err << "error: need 2 <= --min-waypoints <= --max-waypoints\n";
    return kExitUsage;
  }
  const PlannedPath path = nominal_path_for(s, inflation);
  if (!path.feasible) {
    err << "error: no feasible nominal path\n";
    return kExitInfeasible;
  }
  const std::int64_t m = g.particles > 0 ? g.particles : 2000;
  Table t(header_with({}));
  for (int count = min_wp; count <= max_wp; count *= 2) {
    const PathProblem problem = make_path_problem(s, path, dt_for_waypoints(s, path, count));
    const auto wp = static_cast<std::int64_t>(problem.nominal.waypoints.size());
    Stopwatch clock(g.timing);
    const CloseSet close = build_close_set(problem.nominal, problem.moments, problem.workspace);
    const WaypointCPs cps = pointwise_cps(problem.nominal, problem.moments, close);
    const double add = combine(cps, Combination::additive);
    t.add({"additive", num(wp), "0", label_additive(add, g.format), "0", clock.ms()});
    const Stopwatch c2(g.timing);
    t.add({"multiplicative", num(wp), "0", num(combine(cps, Combination::multiplicative)), "0", c2.ms()});
    const Stopwatch c3(g.timing);
    const CPEstimate e = estimate_cp_vr(problem, m, seed_of(g, s));
    t.add({"vr", num(wp), num(e.m), num(e.p_hat), num(e.std_err), c3.ms()});
  }
  return emit(t, g, out, err);
}

int cmd_simulate(const GlobalFlags& g, const Scenario& s, int waypoints, double inflation, std::ostream& out,
                 std::ostream& err) {
  const PlannedPath path = nominal_path_for(s, inflation);
  if (!path.feasible) {
    err << "error: no feasible nominal path\n";
    return kExitInfeasible;
  }
  const PathProblem problem = make_path_problem(s, path, dt_for_waypoints(s, path, waypoints));
  const std::int64_t count = g.particles > 0 ? g.particles : 10;
  const std::uint64_t seed = seed_of(g, s);
  const int n = problem.law.state_dim;
  std::vector<std::string> extra{"particle", "t", "collision"};
  for (int i = 0; i < n; ++i) extra.push_back("x" + std::to_string(i));
  for (int i = 0; i < n; ++i) extra.push_back("xhat" + std::to_string(i));
  std::vector<Rollout> rollouts;
  std::vector<int> hit;
  const Stopwatch clock(g.timing);
  for (std::int64_t p = 0; p < count; ++p) {
    rollouts.push_back(simulate_rollout(problem.nominal, problem.law, nullptr, seed, static_cast<std::uint64_t>(p)));
    hit.push_back(collision_indicator(rollouts.back(), problem.workspace) ? 1 : 0);
  }
  std::int64_t hits = 0;
  for (int h : hit) hits += h;
  const double frac = static_cast<double>(hits) / static_cast<double>(count);
  const double se = count > 1 ? std::sqrt(frac * (1.0 - frac) / static_cast<double>(count - 1)) : 0.0;
  const std::string ms = clock.ms();
  const auto wp = static_cast<std::int64_t>(problem.nominal.waypoints.size());
  Table t(header_with(extra));
  // Row particle = -1 holds the nominal trajectory.
  for (std::int64_t p = -1; p < count; ++p) {
    for (std::size_t step = 0; step < problem.nominal.waypoints.size(); ++step) {
      std::vector<std::string> row{"simulate", num(wp), num(count), num(frac), num(se), ms, num(p), num(static_cast<std::int64_t>(step))};
      const VectorXd& x = p < 0 ? problem.nominal.waypoints[step] : rollouts[static_cast<std::size_t>(p)].states[step];
      const VectorXd& xh = p < 0 ? problem.nominal.waypoints[step] : rollouts[static_cast<std::size_t>(p)].estimates[step];
      row.push_back(p < 0 ? "0" : num(static_cast<std::int64_t>(hit[static_cast<std::size_t>(p)])));
      for (int i = 0; i < n; ++i) row.push_back(num(x(i)));
      for (int i = 0; i < n; ++i) row.push_back(num(xh(i)));
      t.add(std::move(row));
    }
  }
  return emit(t, g, out, err);
}

int cmd_plan(const GlobalFlags& g, const Scenario& s, bool no_backtrack, const std::string& path_out,
             std::ostream& out, std::ostream& err) {
  McmpOptions o = McmpOptions::from_scenario(s);
  if (g.alpha > 0.0) o.alpha = g.alpha;
  if (g.bisection_steps > 0) o.bisection_steps = g.bisection_steps;
  if (g.particles > 0) o.adaptive.max_m = std::max(g.particles, o.adaptive.batch);
  if (no_backtrack) o.backtrack = false;
  const Stopwatch clock(g.timing);
  const PlanResult r = mcmp_plan(s, o, seed_of(g, s));
  Table t(header_with({"iteration", "inflation", "cost", "decision", "virtual_obstacles", "status"}));
  for (const BisectionRecord& rec : r.state.history) {
    const auto wp = static_cast<std::int64_t>(rec.nominal.waypoints.size());
    t.add({rec.feasible ? std::string(to_string(rec.cp.method)) : "none", num(wp), num(rec.cp.m), num(rec.cp.p_hat),
           num(rec.cp.std_err), "0", num(static_cast<std::int64_t>(rec.iteration)), num(rec.inflation),
           rec.feasible ? num(rec.cost) : "inf", std::string(to_string(rec.decision)),
           num(static_cast<std::int64_t>(rec.virtual_obstacles)), rec.feasible ? "evaluated" : "no_path"});
  }
  t.add({"mcmp", num(static_cast<std::int64_t>(r.nominal.waypoints.size())), num(r.total_particles), num(r.cp.p_hat),
         num(r.cp.std_err), clock.ms(), num(static_cast<std::int64_t>(r.state.iteration)), num(r.inflation),
         r.status == PlanStatus::infeasible ? "inf" : num(r.cost), std::string(to_string(r.decision)),
         num(static_cast<std::int64_t>(r.state.virtual_obstacles.size())), std::string(to_string(r.status))});
  if (const int rc = emit(t, g, out, err); rc != kExitOk) return rc;
  if (!path_out.empty() && r.status != PlanStatus::infeasible) {
    std::ofstream f(path_out, std::ios::binary);
    if (!f) {
      err << "error: cannot write " << path_out << "\n";
      return 1;
    }
    const int n = static_cast<int>(r.nominal.waypoints.front().size());
    f << "t";
    for (int i = 0; i < n; ++i) f << ",x" << i;
    f << "\n";
    for (std::size_t step = 0; step < r.nominal.waypoints.size(); ++step) {
      f << step;
      for (int i = 0; i < n; ++i) f << "," << num(r.nominal.waypoints[step](i));
      f << "\n";
    }
  }
  if (r.status == PlanStatus::infeasible) {
    err << "error: no path satisfying the chance constraint was found\n";
    return kExitInfeasible;
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Monte Carlo motion planning: CP estimation and chance-constrained planning", "mcmp_cli"};
  app.fallthrough();
  app.require_subcommand(1);
  GlobalFlags g;
  app.add_option("--scenario", g.scenario, "Scenario JSON file")->required();
  auto* seed_opt = app.add_option("--seed", g.seed, "Master seed (defaults to the scenario seed)");
  app.add_option("--particles", g.particles, "Particle count (plan: per-iteration cap)")->check(CLI::PositiveNumber);
  app.add_option("--alpha", g.alpha, "CP target for plan")->check(CLI::Range(0.0, 1.0));
  app.add_option("--bisection-steps", g.bisection_steps, "Bisection iterations for plan")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Write output to this file instead of stdout");
  app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"csv", "table"}));
  app.add_flag("--timing", g.timing, "Report measured wall_ms (otherwise 0 for reproducible output)");

  std::string methods = "simple,vr,additive,multiplicative";
  int waypoints = 0;
  double inflation = -1.0;
  auto* estimate = app.add_subcommand("estimate", "CP of the scenario nominal path by several methods");
  estimate->add_option("--methods", methods, "Comma-separated subset of simple,vr,additive,multiplicative");
  estimate->add_option("--waypoints", waypoints, "Resample the nominal path to about this many waypoints");
  estimate->add_option("--inflation", inflation, "Inflation used to plan a nominal when the scenario has none");

  bool no_backtrack = false;
  std::string path_out;
  auto* plan_cmd = app.add_subcommand("plan", "Bisection on obstacle inflation against the CP target");
  plan_cmd->add_flag("--no-backtrack", no_backtrack, "Disable block-and-backtrack");
  plan_cmd->add_option("--path-out", path_out, "Write the returned nominal trajectory as CSV");

  int min_wp = 25, max_wp = 1600;
  auto* sweep = app.add_subcommand("sweep", "Approximations and vr estimate versus waypoint count");
  sweep->add_option("--min-waypoints", min_wp, "First waypoint count (doubled each row)");
  sweep->add_option("--max-waypoints", max_wp, "Last waypoint count");
  sweep->add_option("--inflation", inflation, "Inflation used to plan a nominal when the scenario has none");

  auto* oracle = app.add_subcommand("oracle", "High-particle simple Monte Carlo reference");
  oracle->add_option("--waypoints", waypoints, "Resample the nominal path to about this many waypoints");
  oracle->add_option("--inflation", inflation, "Inflation used to plan a nominal when the scenario has none");

  auto* simulate = app.add_subcommand("simulate", "Emit closed-loop rollout traces");
  simulate->add_option("--waypoints", waypoints, "Resample the nominal path to about this many waypoints");
  simulate->add_option("--inflation", inflation, "Inflation used to plan a nominal when the scenario has none");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return kExitOk;
    err << app.help();
    return kExitUsage;
  }
  g.seed_given = seed_opt->count() > 0;

  Scenario s;
  try {
    s = load_scenario(g.scenario);
  } catch (const ScenarioError& e) {
    err << "scenario error: " << e.what() << "\n";
    return kExitScenario;
  }
  const double infl = inflation >= 0.0 ? inflation : s.mcmp.inflation_min;
  try {
    if (*estimate) return cmd_estimate(g, s, methods, waypoints, infl, out, err);
    if (*plan_cmd) return cmd_plan(g, s, no_backtrack, path_out, out, err);
    if (*sweep) return cmd_sweep(g, s, min_wp, max_wp, infl, out, err);
    if (*oracle) return cmd_oracle(g, s, waypoints, infl, out, err);
    if (*simulate) return cmd_simulate(g, s, waypoints, infl, out, err);
  } catch (const ScenarioError& e) {
    err << "scenario error: " << e.what() << "\n";
    return kExitScenario;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}

}  // namespace mcmp
