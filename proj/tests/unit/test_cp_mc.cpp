#include <cmath>
#include <cstdlib>
#include <random>

#include "doctest.h"
#include "mcmp/cp_mc.hpp"
#include "support.hpp"

using namespace mcmp;

namespace {

// Expected combined deviation at step t for mean shifts of injections 0..t.
VectorXd propagate_shifts(const TrackingLaw& law, const ShiftSchedule& shifts, int t) {
  VectorXd z = shifts[0];
  for (int j = 1; j <= t; ++j) z = law.M[static_cast<std::size_t>(j - 1)] * z + shifts[static_cast<std::size_t>(j)];
  return z;
}

double energy(const TrackingLaw& law, const ShiftSchedule& shifts) {
  double e = 0.0;
  for (std::size_t j = 0; j < shifts.size(); ++j) {
    const GaussianFactor f = GaussianFactor::from_covariance(law.injection_covariance(static_cast<int>(j)));
    e += shifts[j].dot(f.pinv * shifts[j]);
  }
  return e;
}

// 1-D integrator holding at 0 with a wall at x >= 2 sigma0 and negligible
// process noise: the CP equals Phi(-2) up to the tiny drift over one step.
PathProblem wall_problem() {
  const double dt = 0.01, sigma0 = 0.1;
  ContinuousLinearSystem c = testing::si_system(1, 1e-14, 1.0);
  const DiscreteLQGSystem d = discretize(c, dt);
  Workspace ws = testing::open_workspace(1, -10, 10);
  VectorXd lo(1), hi(1);
  lo << 2.0 * sigma0;
  hi << 50.0;
  ws.obstacles.push_back(ConvexObstacle::box(lo, hi));
  const TrackingCost cost{MatrixXd::Identity(1, 1), MatrixXd::Identity(1, 1), MatrixXd::Identity(1, 1)};
  return PathProblem::build(testing::hold_nominal(VectorXd::Zero(1), 1, dt), d, cost,
                            sigma0 * sigma0 * MatrixXd::Identity(1, 1), ws);
}

}  // namespace

TEST_CASE("minimum-energy shift meets its target and beats feasible perturbations") {
  const PathProblem si = testing::scenario_problem("si_corridor", 0.03);
  const PathProblem di = testing::scenario_problem("di_corridor");
  std::mt19937_64 rng(5);
  for (int instance = 0; instance < 50; ++instance) {
    const PathProblem& p = instance % 2 ? di : si;
    const TrackingLaw& law = p.law;
    const int k = p.position_dim();
    const int t = 1 + static_cast<int>(rng() % static_cast<unsigned>(law.horizon));
    std::normal_distribution<double> g(0.0, 1.0);
    VectorXd target(k);
    for (int i = 0; i < k; ++i) target(i) = 0.05 * g(rng);
    const ShiftSolution s = solve_shift(law, t, target);
    REQUIRE(static_cast<int>(s.shifts.size()) == t + 1);
    const VectorXd reached = propagate_shifts(law, s.shifts, t).head(k);
    CHECK((reached - target).cwiseAbs().maxCoeff() <= 1e-8);
    const double base = energy(law, s.shifts);
    CHECK(base == doctest::Approx(s.objective()).epsilon(1e-8));
    for (int trial = 0; trial < 100; ++trial) {
      // Random shifts inside each injection's support, minus their effect on the target.
      ShiftSchedule delta(s.shifts.size());
      for (std::size_t j = 0; j < delta.size(); ++j) {
        const GaussianFactor f = GaussianFactor::from_covariance(law.injection_covariance(static_cast<int>(j)));
        VectorXd r(f.rank);
        for (int i = 0; i < f.rank; ++i) r(i) = 0.01 * g(rng);
        delta[j] = f.root * r;
      }
      const ShiftSolution fix = solve_shift(law, t, propagate_shifts(law, delta, t).head(k));
      ShiftSchedule alt = s.shifts;
      for (std::size_t j = 0; j < alt.size(); ++j) alt[j] += delta[j] - fix.shifts[j];
      REQUIRE((propagate_shifts(law, alt, t).head(k) - target).cwiseAbs().maxCoeff() <= 1e-8);
      CHECK(energy(law, alt) >= base - 1e-9 * std::max(1.0, base));
    }
  }
}

TEST_CASE("likelihood ratio agrees with per-injection Gaussian densities") {
  const PathProblem p = testing::scenario_problem("si_corridor", 0.03);
  const CloseSet close = build_close_set(p.nominal, p.moments, p.workspace);
  const ISDistribution isd = build_is_distribution(close, p.law, p.moments);
  for (std::uint64_t particle = 0; particle < 20; ++particle) {
    std::size_t chosen = 0;
    const Rollout r = sample_mixture_rollout(p, isd, 3, particle, &chosen);
    double log_p = 0.0;
    std::vector<double> log_q(isd.components.size(), 0.0);
    for (std::size_t j = 0; j < r.noise.size(); ++j) {
      const GaussianFactor f = GaussianFactor::from_covariance(p.law.injection_covariance(static_cast<int>(j)));
      const VectorXd zero = VectorXd::Zero(r.noise[j].size());
      log_p += f.log_density(r.noise[j], zero);
      for (std::size_t c = 0; c < isd.components.size(); ++c) {
        const ShiftSchedule& sh = isd.components[c].shift.shifts;
        log_q[c] += f.log_density(r.noise[j], j < sh.size() ? sh[j] : zero);
      }
    }
    double q = 0.0;
    for (std::size_t c = 0; c < log_q.size(); ++c) q += isd.components[c].weight * std::exp(log_q[c] - log_p);
    CHECK(likelihood_ratio(r, isd, p.law) == doctest::Approx(1.0 / q).epsilon(1e-7));
  }
}

TEST_CASE("likelihood ratio has unit mean under the mixture") {
  const PathProblem p = testing::scenario_problem("si_corridor");
  const CloseSet close = build_close_set(p.nominal, p.moments, p.workspace);
  const ISDistribution isd = build_is_distribution(close, p.law, p.moments);
  const VRSamples s = sample_vr(p, close, isd, 0, 100000, 77);
  const double mean = testing::mean_of(s.L);
  const double se = std::sqrt(testing::variance_of(s.L) / static_cast<double>(s.L.size()));
  CHECK(std::abs(mean - 1.0) < 3.0 * se);
}

TEST_CASE("control variate has its exact mean under the nominal law") {
  const PathProblem p = testing::scenario_problem("si_corridor");
  const CloseSet close = build_close_set(p.nominal, p.moments, p.workspace);
  std::vector<double> h;
  for (std::uint64_t i = 0; i < 40000; ++i) {
    const Rollout r = simulate_rollout(p.nominal, p.law, nullptr, 9, i);
    h.push_back(control_variate_value(r, p.nominal, close));
  }
  const double se = std::sqrt(testing::variance_of(h) / static_cast<double>(h.size()));
  CHECK(std::abs(testing::mean_of(h) - close.theta) < 4.0 * se);
}

TEST_CASE("simple and vr estimators recover a one-sided normal tail") {
  const PathProblem p = wall_problem();
  const double truth = standard_normal_cdf(-2.0);
  const CPEstimate simple = simple_mc(p, 400000, 1);
  CHECK(std::abs(simple.p_hat - truth) < 4.0 * simple.std_err);
  const CPEstimate vr = estimate_cp_vr(p, 20000, 2);
  CHECK(vr.method == EstimatorMethod::vr);
  CHECK(std::abs(vr.p_hat - truth) < 4.0 * vr.std_err + 1e-4);
  CHECK(vr.std_err < simple.std_err);
}

TEST_CASE("estimators are reproducible and independent of the thread count") {
  const PathProblem p = testing::scenario_problem("si_corridor");
  setenv("MCMP_THREADS", "1", 1);
  const CPEstimate a = estimate_cp_vr(p, 3000, 11);
  const CPEstimate s1 = simple_mc(p, 3000, 11);
  setenv("MCMP_THREADS", "8", 1);
  const CPEstimate b = estimate_cp_vr(p, 3000, 11);
  const CPEstimate s8 = simple_mc(p, 3000, 11);
  unsetenv("MCMP_THREADS");
  CHECK(a.p_raw == b.p_raw);
  CHECK(a.std_err == b.std_err);
  CHECK(s1.p_hat == s8.p_hat);
  CHECK(estimate_cp_vr(p, 3000, 12).p_raw != a.p_raw);
}

TEST_CASE("vr falls back to simple Monte Carlo when nothing is close") {
  Workspace ws = testing::open_workspace(2, -10, 10);
  ws.obstacles.push_back(ConvexObstacle::box(VectorXd::Constant(2, 5.0), VectorXd::Constant(2, 6.0)));
  const double dt = 0.1;
  const TrackingCost cost{MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2)};
  const PathProblem p = PathProblem::build(testing::hold_nominal(VectorXd::Zero(2), 10, dt),
                                           discretize(testing::si_system(2, 1e-4, 1e-4), dt), cost,
                                           1e-4 * MatrixXd::Identity(2, 2), ws);
  const CPEstimate e = estimate_cp_vr(p, 1000, 1);
  CHECK(e.method == EstimatorMethod::simple);
  CHECK(e.p_hat == 0.0);
}

TEST_CASE("adaptive estimator decides early when the answer is clear") {
  const PathProblem p = testing::scenario_problem("si_corridor");
  AdaptiveOptions o;
  o.alpha = 0.05;
  const AdaptiveResult low = estimate_cp_adaptive(p, o, 1);
  CHECK(low.decision == Decision::below);
  CHECK(low.estimate.m == o.batch);
  o.alpha = 0.002;
  const AdaptiveResult high = estimate_cp_adaptive(p, o, 1);
  CHECK(high.decision == Decision::above);
  o.alpha = 0.0113;
  o.rel_tol = 0.0;
  o.max_m = 3000;
  const AdaptiveResult close = estimate_cp_adaptive(p, o, 1);
  CHECK(close.estimate.m <= 3000);
  CHECK(close.estimate.m % o.batch == 0);
}
