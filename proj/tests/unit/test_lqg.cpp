#include <cmath>
#include <vector>

#include "doctest.h"
#include "mcmp/lqg.hpp"
#include "support.hpp"

using namespace mcmp;

namespace {

// Composite Simpson quadrature of int_0^dt e^{A s} X e^{A^T s} ds with the
// matrix exponential taken from a truncated Taylor series.
MatrixXd expm_series(const MatrixXd& A) {
  MatrixXd sum = MatrixXd::Identity(A.rows(), A.cols());
  MatrixXd term = sum;
  for (int k = 1; k < 40; ++k) {
    term = term * A / k;
    sum += term;
  }
  return sum;
}

MatrixXd integral(const MatrixXd& A, const MatrixXd& X, double dt, bool sandwich) {
  const int n = 2000;
  const double h = dt / n;
  MatrixXd acc = MatrixXd::Zero(sandwich ? A.rows() : X.rows(), X.cols());
  for (int i = 0; i <= n; ++i) {
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    const MatrixXd e = expm_series(A * (i * h));
    acc += w * (sandwich ? MatrixXd(e * X * e.transpose()) : MatrixXd(e * X));
  }
  return acc * h / 3.0;
}

}  // namespace

TEST_CASE("zero-order-hold discretization matches quadrature") {
  ContinuousLinearSystem c;
  c.A.resize(3, 3);
  c.A << -0.3, 1.0, 0.0, -0.2, -0.5, 0.4, 0.1, 0.0, -1.0;
  c.B.resize(3, 2);
  c.B << 1.0, 0.0, 0.5, 1.0, 0.0, 2.0;
  c.C = MatrixXd::Identity(3, 3);
  c.V = testing::diag({0.2, 0.5, 0.1});
  c.V(0, 1) = c.V(1, 0) = 0.05;
  c.W = testing::diag({0.3, 0.3, 0.3});
  const double dt = 0.37;
  const DiscreteLQGSystem d = discretize(c, dt);
  CHECK((d.A - expm_series(c.A * dt)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((d.B - integral(c.A, c.B, dt, false)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((d.V - integral(c.A, c.V, dt, true)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((d.W - c.W / dt).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(d.dt == dt);
}

TEST_CASE("double integrator process noise has the closed-form covariance") {
  ContinuousLinearSystem c;
  c.A = MatrixXd::Zero(2, 2);
  c.A(0, 1) = 1.0;
  c.B = MatrixXd(2, 1);
  c.B << 0.0, 1.0;
  c.C = MatrixXd::Identity(2, 2);
  c.V = testing::diag({0.0, 2.0});
  c.W = MatrixXd::Identity(2, 2);
  const double dt = 0.1, q = 2.0;
  const DiscreteLQGSystem d = discretize(c, dt);
  CHECK(d.V(0, 0) == doctest::Approx(q * dt * dt * dt / 3).epsilon(1e-12));
  CHECK(d.V(0, 1) == doctest::Approx(q * dt * dt / 2).epsilon(1e-12));
  CHECK(d.V(1, 1) == doctest::Approx(q * dt).epsilon(1e-12));
  CHECK(d.B(0, 0) == doctest::Approx(dt * dt / 2).epsilon(1e-12));
}

TEST_CASE("scalar Riccati and Kalman recursions converge to the golden ratio") {
  DiscreteLQGSystem d;
  d.A = MatrixXd::Identity(1, 1);
  d.B = MatrixXd::Identity(1, 1);
  d.C = MatrixXd::Identity(1, 1);
  d.V = MatrixXd::Identity(1, 1);
  d.W = MatrixXd::Identity(1, 1);
  d.dt = 1.0;
  const TrackingCost cost{MatrixXd::Identity(1, 1), MatrixXd::Identity(1, 1), MatrixXd::Identity(1, 1)};
  const TrackingLaw law = synthesize(d, cost, 200, MatrixXd::Identity(1, 1));
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  CHECK(std::abs(law.S[0](0, 0) - phi) < 1e-9);
  CHECK(std::abs(law.P[200](0, 0) - phi) < 1e-9);
  // Steady-state LQR gain S / (1 + S) = 1 / phi.
  CHECK(std::abs(law.L[0](0, 0) + 1.0 / phi) < 1e-9);
}

TEST_CASE("moment propagation matches the sample covariance of rollouts") {
  const PathProblem p = testing::scenario_problem("si_corridor", 0.03);
  const int T = p.nominal.horizon();
  const int m = 100000;
  const std::vector<int> probe{1, T / 3, T};
  const int n = p.law.state_dim;
  std::vector<MatrixXd> second(probe.size(), MatrixXd::Zero(2 * n, 2 * n));
  std::vector<VectorXd> first(probe.size(), VectorXd::Zero(2 * n));
  for (int i = 0; i < m; ++i) {
    const Rollout r = simulate_rollout(p.nominal, p.law, nullptr, 17, static_cast<std::uint64_t>(i));
    for (std::size_t k = 0; k < probe.size(); ++k) {
      const auto t = static_cast<std::size_t>(probe[k]);
      VectorXd z(2 * n);
      z << r.states[t] - p.nominal.waypoints[t], r.estimates[t] - p.nominal.waypoints[t];
      first[k] += z;
      second[k] += z * z.transpose();
    }
  }
  for (std::size_t k = 0; k < probe.size(); ++k) {
    const MatrixXd& sigma = p.moments.sigma[static_cast<std::size_t>(probe[k])];
    const VectorXd mean = first[k] / m;
    const MatrixXd cov = second[k] / m - mean * mean.transpose();
    for (int i = 0; i < 2 * n; ++i) {
      CHECK(std::abs(mean(i)) < 5.0 * std::sqrt(sigma(i, i) / m) + 1e-15);
      for (int j = 0; j < 2 * n; ++j) {
        const double se = std::sqrt((sigma(i, i) * sigma(j, j) + sigma(i, j) * sigma(i, j)) / m);
        CHECK(std::abs(cov(i, j) - sigma(i, j)) < 5.0 * se + 1e-15);
      }
    }
  }
}

TEST_CASE("nominal trajectory validation rejects inconsistent data") {
  const DiscreteLQGSystem d = discretize(testing::si_system(2, 1e-3, 1e-3), 0.1);
  NominalTrajectory n = testing::hold_nominal(VectorXd::Zero(2), 5, 0.1);
  CHECK_NOTHROW(n.validate(d));
  n.waypoints[3](0) += 0.01;
  CHECK_THROWS_AS(n.validate(d), std::invalid_argument);
  n = testing::hold_nominal(VectorXd::Zero(2), 5, 0.1);
  n.controls.pop_back();
  CHECK_THROWS_AS(n.validate(d), std::invalid_argument);
}

TEST_CASE("invalid continuous systems are rejected") {
  ContinuousLinearSystem c = testing::si_system(2, 1e-3, 1e-3);
  c.W(0, 0) = 0.0;
  CHECK_THROWS(discretize(c, 0.1));
  c = testing::si_system(2, 1e-3, 1e-3);
  CHECK_THROWS(discretize(c, 0.0));
}
