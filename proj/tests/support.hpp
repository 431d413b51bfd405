#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mcmp/cp_mc.hpp"
#include "mcmp/lqg.hpp"
#include "mcmp/scenario.hpp"

namespace mcmp::testing {

inline std::string scenario_path(const std::string& name) {
  return std::string(MCMP_SOURCE_DIR) + "/scenarios/" + name + ".json";
}

inline MatrixXd diag(std::initializer_list<double> v) {
  VectorXd d(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) d(i++) = x;
  return d.asDiagonal();
}

// Single integrator of dimension k holding still at `at` for `steps` steps.
inline NominalTrajectory hold_nominal(const VectorXd& at, int steps, double dt) {
  NominalTrajectory n;
  n.dt = dt;
  for (int t = 0; t <= steps; ++t) n.waypoints.push_back(at);
  for (int t = 0; t < steps; ++t) n.controls.push_back(VectorXd::Zero(at.size()));
  return n;
}

inline ContinuousLinearSystem si_system(int k, double v, double w) {
  ContinuousLinearSystem c;
  c.A = MatrixXd::Zero(k, k);
  c.B = MatrixXd::Identity(k, k);
  c.C = MatrixXd::Identity(k, k);
  c.V = v * MatrixXd::Identity(k, k);
  c.W = w * MatrixXd::Identity(k, k);
  return c;
}

inline Workspace open_workspace(int k, double lo, double hi) {
  Workspace ws;
  ws.bounds.lower = VectorXd::Constant(k, lo);
  ws.bounds.upper = VectorXd::Constant(k, hi);
  ws.start = VectorXd::Zero(k);
  ws.goal.shape = GoalRegion::Shape::ball;
  ws.goal.center = VectorXd::Constant(k, hi);
  ws.goal.radius = 0.1;
  return ws;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double variance_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

// Problem on the scenario's own nominal path (or the planned path at I_min).
inline PathProblem scenario_problem(const std::string& name, double dt_override = 0.0) {
  const Scenario s = load_scenario(scenario_path(name));
  return make_path_problem(s, scenario_nominal_path(s), dt_override);
}

}  // namespace mcmp::testing
