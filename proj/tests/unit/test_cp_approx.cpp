#include <cmath>

#include "doctest.h"
#include "mcmp/cp_approx.hpp"
#include "support.hpp"

using namespace mcmp;

TEST_CASE("pointwise CP equals the Gaussian mass of a wide slab") {
  // A slab wide in x: its Gaussian mass is a product of 1-D normal CDF differences.
  Workspace ws = testing::open_workspace(2, -100, 100);
  VectorXd lo(2), hi(2);
  lo << -60.0, 0.25;
  hi << 60.0, 50.0;
  ws.obstacles.push_back(ConvexObstacle::box(lo, hi));
  const NominalTrajectory nominal = testing::hold_nominal(VectorXd::Zero(2), 2, 0.1);
  MomentSchedule moments;
  const double sx = 0.3, sy = 0.1;
  for (int t = 0; t < 3; ++t) {
    moments.mu.push_back(VectorXd::Zero(4));
    moments.sigma.push_back(testing::diag({sx * sx, sy * sy, 0.0, 0.0}));
  }
  const CloseSet close = build_close_set(nominal, moments, ws);
  const WaypointCPs cps = pointwise_cps(nominal, moments, close);
  const double exact = (standard_normal_cdf(hi(1) / sy) - standard_normal_cdf(lo(1) / sy)) *
                       (standard_normal_cdf(hi(0) / sx) - standard_normal_cdf(lo(0) / sx));
  REQUIRE(cps.count() == 3);
  for (double c : cps.cp) CHECK(c == doctest::Approx(exact).epsilon(1e-9));
}

TEST_CASE("additive and multiplicative combinations") {
  WaypointCPs cps;
  cps.cp = {0.1, 0.2, 0.0, 0.05};
  CHECK(combine(cps, Combination::additive) == doctest::Approx(0.35));
  CHECK(combine(cps, Combination::multiplicative) == doctest::Approx(1.0 - 0.9 * 0.8 * 0.95));
  cps.cp.assign(3000, 0.001);
  CHECK(combine(cps, Combination::additive) == doctest::Approx(3.0));
  CHECK(combine(cps, Combination::multiplicative) == doctest::Approx(1.0 - std::pow(0.999, 3000)));
  cps.cp = {0.0, 0.0};
  CHECK(combine(cps, Combination::additive) == 0.0);
  CHECK_FALSE(std::signbit(combine(cps, Combination::multiplicative)));
  cps.cp = {0.3, 1.0};
  CHECK(combine(cps, Combination::multiplicative) == 1.0);
  cps.cp = {1e-18, 1e-18};
  CHECK(combine(cps, Combination::multiplicative) == doctest::Approx(2e-18).epsilon(1e-9));
}

TEST_CASE("multiplicative never exceeds additive and both grow with resolution") {
  const Scenario s = load_scenario(testing::scenario_path("si_corridor"));
  const PlannedPath path = scenario_nominal_path(s);
  double last_add = 0.0, last_mul = 0.0;
  for (double dt : {0.04, 0.02, 0.01, 0.005}) {
    const PathProblem p = make_path_problem(s, path, dt);
    const CloseSet close = build_close_set(p.nominal, p.moments, p.workspace);
    const WaypointCPs cps = pointwise_cps(p.nominal, p.moments, close);
    const double add = combine(cps, Combination::additive), mul = combine(cps, Combination::multiplicative);
    CHECK(mul <= add + 1e-15);
    CHECK(add > last_add);
    CHECK(mul > last_mul);
    last_add = add;
    last_mul = mul;
  }
}
