// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mcmp/cli.hpp"
#include "mcmp/cp_approx.hpp"
#include "mcmp/cp_mc.hpp"
#include "mcmp/mcmp.hpp"
#include "mcmp/scenario.hpp"
#include "support.hpp"

using namespace mcmp;

namespace {

constexpr std::int64_t kOracleParticles = 10000000;
constexpr std::uint64_t kOracleSeed = 0x0AC1E;

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Scenario scenario(const std::string& name) { return load_scenario(testing::scenario_path(name)); }

// Problem on the scenario nominal path, or on the smoothed plan at I_min.
PathProblem bundled_problem(const Scenario& s, double dt = 0.0) {
  if (!s.nominal_path.empty()) return make_path_problem(s, scenario_nominal_path(s), dt);
  Workspace ws = s.workspace();
  ws.inflation = s.mcmp.inflation_min;
  PlannedPath p = plan(prepare(s.steering_model(), ws, s.planner_options()), ws);
  if (!p.feasible) throw std::runtime_error(s.name + ": no nominal path");
  if (s.planner.smoothing && s.dynamics == Dynamics::single_integrator) p = adaptive_shortcut(p, ws);
  return make_path_problem(s, p, dt);
}

struct Replications {
  std::vector<double> p;
  double mean = 0.0, var = 0.0;
};

Replications replicate(const std::function<CPEstimate(std::uint64_t)>& run, int count, std::uint64_t salt) {
  Replications r;
  for (int i = 0; i < count; ++i) r.p.push_back(run(derive_seed(salt, static_cast<std::uint64_t>(i))).p_hat);
  r.mean = testing::mean_of(r.p);
  r.var = testing::variance_of(r.p);
  return r;
}

struct OracleCase {
  std::string name;
  PathProblem problem;
  CPEstimate oracle;
  Replications vr;
  double seconds = 0.0;
};

std::vector<OracleCase>& oracle_cases() {
  static std::vector<OracleCase> cases;
  return cases;
}

Outcome ac1() {
  const auto start = Clock::now();
  Outcome o{true, ""};
  for (const char* name : {"si_two_gap", "si_corridor", "di_corridor"}) {
    const auto t0 = Clock::now();
    OracleCase c{name, bundled_problem(scenario(name)), {}, {}, 0.0};
    c.oracle = simple_mc(c.problem, kOracleParticles, kOracleSeed);
    c.vr = replicate([&](std::uint64_t seed) { return estimate_cp_vr(c.problem, 2000, seed); }, 200, 0xA1);
    c.seconds = seconds_since(t0);
    const double se_mean = std::sqrt(c.vr.var / 200.0);
    const bool ok = std::abs(c.vr.mean - c.oracle.p_hat) <= 4.0 * se_mean;
    o.pass = o.pass && ok;
    o.detail += fmt("%s[T=%d oracle=%.5f±%.5f vr_mean=%.5f se_mean=%.5f z=%.2f %.0fs] ", name,
                    c.problem.nominal.horizon(), c.oracle.p_hat, c.oracle.std_err, c.vr.mean, se_mean,
                    (c.vr.mean - c.oracle.p_hat) / se_mean, c.seconds);
    oracle_cases().push_back(std::move(c));
  }
  const double total = seconds_since(start);
  const bool fast = total < 300.0;
  o.detail += fmt("total=%.0fs (target <300s: %s)", total, fast ? "met" : "missed");
  o.pass = o.pass && fast;
  return o;
}

const OracleCase& corridor_case() {
  for (const OracleCase& c : oracle_cases()) {
    if (c.name == "si_corridor") return c;
  }
  throw std::runtime_error("corridor oracle missing");
}

Outcome ac2() {
  const OracleCase& c = corridor_case();
  const Replications simple =
      replicate([&](std::uint64_t seed) { return simple_mc(c.problem, 2000, seed); }, 200, 0xA2);
  const double ratio = simple.var / c.vr.var;
  return {ratio >= 5.0, fmt("var_simple=%.3e var_vr=%.3e ratio=%.1f (need >= 5)", simple.var, c.vr.var, ratio)};
}

Outcome ac3() {
  const auto start = Clock::now();
  const Scenario s = scenario("si_corridor");
  const PlannedPath path = scenario_nominal_path(s);
  const double duration = path_length(path.states) / s.speed;
  std::vector<double> add, mul, vr;
  std::string rows;
  for (int n = 25; n <= 1600; n *= 2) {
    const PathProblem p = make_path_problem(s, path, duration / (n - 1));
    const CloseSet close = build_close_set(p.nominal, p.moments, p.workspace);
    const WaypointCPs cps = pointwise_cps(p.nominal, p.moments, close);
    add.push_back(combine(cps, Combination::additive));
    mul.push_back(combine(cps, Combination::multiplicative));
    vr.push_back(estimate_cp_vr(p, 10000, derive_seed(0xA3, static_cast<std::uint64_t>(n))).p_hat);
    rows += fmt("%d:%.4g/%.4g/%.4g ", static_cast<int>(p.nominal.waypoints.size()), add.back(), mul.back(), vr.back());
  }
  bool add_up = true, mul_up = true;
  for (std::size_t i = 1; i < add.size(); ++i) {
    add_up = add_up && add[i] > add[i - 1];
    mul_up = mul_up && mul[i] > mul[i - 1];
  }
  const double lo = *std::min_element(vr.begin(), vr.end()), hi = *std::max_element(vr.begin(), vr.end());
  const double spread = (hi - lo) / lo;
  const double secs = seconds_since(start);
  const bool pass = add_up && add.back() > 1.0 && mul_up && mul.back() >= 0.99 && spread < 0.15 && secs < 120.0;
  return {pass, fmt("waypoints:additive/multiplicative/vr %s| vr spread=%.1f%% %.0fs", rows.c_str(), 100 * spread, secs)};
}

Outcome ac4() {
  const OracleCase& c = corridor_case();
  const CloseSet close = build_close_set(c.problem.nominal, c.problem.moments, c.problem.workspace);
  const WaypointCPs cps = pointwise_cps(c.problem.nominal, c.problem.moments, close);
  const double add = combine(cps, Combination::additive), mul = combine(cps, Combination::multiplicative);
  const double ra = add / c.oracle.p_hat, rm = mul / c.oracle.p_hat;
  return {ra >= 5.0 && rm >= 5.0,
          fmt("waypoints=%zu oracle=%.5f additive=%.4f (x%.1f) multiplicative=%.4f (x%.1f)",
              c.problem.nominal.waypoints.size(), c.oracle.p_hat, add, ra, mul, rm)};
}

Outcome ac5() {
  const Scenario s = scenario("si_corridor");
  McmpOptions o = McmpOptions::from_scenario(s);
  o.alpha = 0.01;
  o.bisection_steps = 10;
  setenv("MCMP_THREADS", "1", 1);
  const auto t0 = Clock::now();
  const PlanResult r = mcmp_plan(s, o, s.seed);
  const double secs = seconds_since(t0);
  unsetenv("MCMP_THREADS");
  if (r.status == PlanStatus::infeasible) return {false, "no path returned"};
  const PathProblem p = make_path_problem(s, r.nominal);
  const CPEstimate oracle = simple_mc(p, kOracleParticles, kOracleSeed);
  const bool pass = oracle.p_hat >= 0.007 && oracle.p_hat <= 0.013 && r.total_particles <= 30000 && secs <= 60.0;
  return {pass, fmt("status=%s inflation=%.5f p_hat=%.5f oracle=%.5f±%.5f particles=%lld waypoints=%zu wall=%.2fs",
                    std::string(to_string(r.status)).c_str(), r.inflation, r.cp.p_hat, oracle.p_hat, oracle.std_err,
                    static_cast<long long>(r.total_particles), r.nominal.waypoints.size(), secs)};
}

Outcome ac6() {
  const Scenario s = scenario("si_two_gap");
  McmpOptions o = McmpOptions::from_scenario(s);
  o.backtrack = false;
  const PlanResult plain = mcmp_plan(s, o, s.seed);
  o.backtrack = true;
  const PlanResult fixed = mcmp_plan(s, o, s.seed);
  if (fixed.status == PlanStatus::infeasible) return {false, "backtracking returned no path"};
  const CPEstimate oracle = simple_mc(make_path_problem(s, fixed.nominal), kOracleParticles, kOracleSeed);
  const bool pass = plain.status == PlanStatus::stuck && oracle.p_hat <= 0.013;
  return {pass, fmt("plain=%s backtracking=%s backtracks=%d inflation=%.5f oracle=%.5f±%.5f",
                    std::string(to_string(plain.status)).c_str(), std::string(to_string(fixed.status)).c_str(),
                    fixed.state.backtracks, fixed.inflation, oracle.p_hat, oracle.std_err)};
}

Outcome ac7() {
  // Scalar Riccati fixed point.
  DiscreteLQGSystem d;
  d.A = d.B = d.C = d.V = d.W = MatrixXd::Identity(1, 1);
  d.dt = 1.0;
  const TrackingCost cost{MatrixXd::Identity(1, 1), MatrixXd::Identity(1, 1), MatrixXd::Identity(1, 1)};
  const TrackingLaw law = synthesize(d, cost, 200, MatrixXd::Identity(1, 1));
  const double riccati_err = std::abs(law.S[0](0, 0) - (1.0 + std::sqrt(5.0)) / 2.0);

  // Moments against 1e5 rollouts, entrywise at 5 sigma.
  const PathProblem p = bundled_problem(scenario("si_corridor"));
  const int n = p.law.state_dim, T = p.nominal.horizon(), m = 100000;
  const std::vector<int> probe{1, T / 4, T / 2, T};
  std::vector<MatrixXd> second(probe.size(), MatrixXd::Zero(2 * n, 2 * n));
  std::vector<VectorXd> first(probe.size(), VectorXd::Zero(2 * n));
  for (int i = 0; i < m; ++i) {
    const Rollout r = simulate_rollout(p.nominal, p.law, nullptr, 0xA7, static_cast<std::uint64_t>(i));
    for (std::size_t k = 0; k < probe.size(); ++k) {
      const auto t = static_cast<std::size_t>(probe[k]);
      VectorXd z(2 * n);
      z << r.states[t] - p.nominal.waypoints[t], r.estimates[t] - p.nominal.waypoints[t];
      first[k] += z;
      second[k] += z * z.transpose();
    }
  }
  double worst_z = 0.0;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    const MatrixXd& sigma = p.moments.sigma[static_cast<std::size_t>(probe[k])];
    const VectorXd mean = first[k] / m;
    const MatrixXd cov = second[k] / m - mean * mean.transpose();
    for (int i = 0; i < 2 * n; ++i) {
      for (int j = 0; j < 2 * n; ++j) {
        const double se = std::sqrt((sigma(i, i) * sigma(j, j) + sigma(i, j) * sigma(i, j)) / m);
        if (se > 0) worst_z = std::max(worst_z, std::abs(cov(i, j) - sigma(i, j)) / se);
      }
    }
  }

  // E_Q[L] = 1 under the mixture.
  const CloseSet close = build_close_set(p.nominal, p.moments, p.workspace);
  const ISDistribution isd = build_is_distribution(close, p.law, p.moments);
  const VRSamples s = sample_vr(p, close, isd, 0, 100000, 0xA7);
  const double lmean = testing::mean_of(s.L);
  const double lse = std::sqrt(testing::variance_of(s.L) / static_cast<double>(s.L.size()));
  const bool pass = riccati_err <= 1e-9 && worst_z <= 5.0 && std::abs(lmean - 1.0) <= 3.0 * lse;
  return {pass, fmt("riccati_err=%.2e moment_max_z=%.2f E_Q[L]=%.5f±%.5f", riccati_err, worst_z, lmean, lse)};
}

Outcome ac8() {
  const PathProblem si = bundled_problem(scenario("si_corridor"));
  const PathProblem di = bundled_problem(scenario("di_corridor"));
  std::mt19937_64 rng(0xA8);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst_residual = 0.0;
  int beaten = 0;
  for (int instance = 0; instance < 50; ++instance) {
    const PathProblem& p = instance % 2 ? di : si;
    const TrackingLaw& law = p.law;
    const int k = p.position_dim();
    const int t = 1 + static_cast<int>(rng() % static_cast<unsigned>(law.horizon));
    VectorXd target(k);
    for (int i = 0; i < k; ++i) target(i) = 0.05 * g(rng);
    auto reach = [&](const ShiftSchedule& sh) {
      VectorXd z = sh[0];
      for (int j = 1; j <= t; ++j) z = law.M[static_cast<std::size_t>(j - 1)] * z + sh[static_cast<std::size_t>(j)];
      return VectorXd(z.head(k));
    };
    auto energy = [&](const ShiftSchedule& sh) {
      double e = 0.0;
      for (std::size_t j = 0; j < sh.size(); ++j) {
        e += sh[j].dot(GaussianFactor::from_covariance(law.injection_covariance(static_cast<int>(j))).pinv * sh[j]);
      }
      return e;
    };
    const ShiftSolution s = solve_shift(law, t, target);
    worst_residual = std::max(worst_residual, (reach(s.shifts) - target).cwiseAbs().maxCoeff());
    const double base = energy(s.shifts);
    for (int trial = 0; trial < 100; ++trial) {
      ShiftSchedule delta(s.shifts.size());
      for (std::size_t j = 0; j < delta.size(); ++j) {
        const GaussianFactor f = GaussianFactor::from_covariance(law.injection_covariance(static_cast<int>(j)));
        VectorXd r(f.rank);
        for (int i = 0; i < f.rank; ++i) r(i) = 0.01 * g(rng);
        delta[j] = f.root * r;
      }
      const ShiftSolution fix = solve_shift(law, t, reach(delta));
      ShiftSchedule alt = s.shifts;
      for (std::size_t j = 0; j < alt.size(); ++j) alt[j] += delta[j] - fix.shifts[j];
      if (energy(alt) < base - 1e-9 * std::max(1.0, base)) ++beaten;
    }
  }
  return {worst_residual <= 1e-8 && beaten == 0,
          fmt("max_residual=%.2e perturbations_better=%d/5000", worst_residual, beaten)};
}

std::string run_cli_capture(const std::vector<std::string>& args, int* code) {
  std::vector<std::string> full{"mcmp_cli"};
  full.insert(full.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const std::string& a : full) argv.push_back(a.c_str());
  std::ostringstream out, err;
  *code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return out.str();
}

Outcome ac9() {
  const std::string corridor = testing::scenario_path("si_corridor");
  const std::string di = testing::scenario_path("di_corridor");
  const std::vector<std::vector<std::string>> commands{
      {"--scenario", corridor, "--seed", "7", "--particles", "2000", "estimate"},
      {"--scenario", di, "--seed", "7", "--particles", "2000", "estimate"},
      {"--scenario", corridor, "--seed", "7", "plan"},
      {"--scenario", corridor, "--seed", "7", "--particles", "1000", "sweep", "--max-waypoints", "400"},
      {"--scenario", corridor, "--seed", "7", "--particles", "50000", "oracle"},
      {"--scenario", corridor, "--seed", "7", "--particles", "5", "simulate"},
  };
  int identical = 0;
  std::string failed;
  for (const auto& cmd : commands) {
    int c1 = 0, c2 = 0, c8 = 0;
    setenv("MCMP_THREADS", "1", 1);
    const std::string a = run_cli_capture(cmd, &c1);
    const std::string b = run_cli_capture(cmd, &c2);
    setenv("MCMP_THREADS", "8", 1);
    const std::string c = run_cli_capture(cmd, &c8);
    unsetenv("MCMP_THREADS");
    const std::string& sub = cmd[cmd.size() - 1 - (cmd.back() == "400" ? 2 : 0)];
    if (c1 == 0 && a == b && a == c && !a.empty()) {
      ++identical;
    } else {
      failed += sub + " ";
    }
  }
  return {identical == static_cast<int>(commands.size()),
          fmt("%d/%zu commands byte-identical across runs and 1 vs 8 threads %s", identical, commands.size(),
              failed.c_str())};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"AC1 estimator matches high-particle oracle", ac1},
      {"AC2 variance reduction factor", ac2},
      {"AC3 approximations diverge with resolution", ac3},
      {"AC4 approximation overestimate factor", ac4},
      {"AC5 chance-constraint attainment", ac5},
      {"AC6 block-and-backtrack", ac6},
      {"AC7 LQG numerics", ac7},
      {"AC8 shift optimality", ac8},
      {"AC9 CLI determinism", ac9},
  };
  int failures = 0;
  for (const auto& [label, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", label.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
