#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcmp/cp_mc.hpp"
#include "mcmp/geometry.hpp"
#include "mcmp/lqg.hpp"
#include "mcmp/planner.hpp"

namespace mcmp {

// Validation or parse failure while loading a scenario; carries the JSON
// pointer and the 1-based source line it refers to (0 when unknown).
class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(const std::string& message, std::string pointer, int line)
      : std::runtime_error(message), pointer_(std::move(pointer)), line_(line) {}
  const std::string& pointer() const { return pointer_; }
  int line() const { return line_; }

 private:
  std::string pointer_;
  int line_;
};

// Obstacle as written in the scenario file; kept in its source form so that
// serialization reproduces the input.
struct ObstacleSpec {
  enum class Kind { box, vertices, halfspaces };
  Kind kind = Kind::box;
  VectorXd lower, upper;           // box
  std::vector<VectorXd> vertices;  // vertices
  std::vector<Halfspace> faces;    // halfspaces (as given, not normalized)

  ConvexObstacle build() const;
};

struct PlannerSettings {
  int nodes = 1000;
  std::uint64_t seed = 1;
  double resolution = 0.05;
  double time_weight = 1.0;
  MatrixXd control_weight;  // DI steering R; identity when empty
  double velocity_bound = 1.0;
  double radius_scale = 1.0;
  bool smoothing = true;  // adaptive shortcut (single integrator only)
};

struct McmpSettings {
  double inflation_min = 0.0;
  double inflation_max = 1.0;
  int bisection_steps = 10;
  bool backtrack = true;
  int max_backtracks = 3;
  double blocker_scale = 2.0;
  std::int64_t batch = 500;
  std::int64_t max_m = 20000;
  double confidence_z = 2.0;
  double rel_tol = 0.05;
};

struct Scenario {
  std::string name;
  Dynamics dynamics = Dynamics::single_integrator;
  int dimension = 2;
  double dt = 0.1;
  double speed = 1.0;  // single-integrator traversal speed
  MatrixXd process_noise;      // continuous intensity V_c (state_dim)
  MatrixXd measurement_noise;  // continuous intensity W_c (output_dim)
  MatrixXd measurement_matrix; // C; identity when empty
  MatrixXd Q, R, F;
  MatrixXd initial_covariance;  // P0
  AxisBox bounds;
  VectorXd start;  // full state
  GoalRegion goal;
  std::vector<ObstacleSpec> obstacles;
  double alpha = 0.01;
  std::uint64_t seed = 1;
  std::vector<VectorXd> nominal_path;  // optional: SI positions or DI states
  PlannerSettings planner;
  McmpSettings mcmp;

  int state_dim() const { return dynamics == Dynamics::single_integrator ? dimension : 2 * dimension; }
  int input_dim() const { return dimension; }

  ContinuousLinearSystem continuous_system() const;
  DiscreteLQGSystem discrete_system() const;
  DiscreteLQGSystem discrete_system(double dt_override) const;
  TrackingCost tracking_cost() const;
  SteeringModel steering_model() const;
  PlannerOptions planner_options() const;
  AdaptiveOptions adaptive_options() const;
  // True obstacles at zero inflation.
  Workspace workspace() const;

  // Throws ScenarioError (without a line) if the fields are inconsistent.
  void validate() const;
};

bool operator==(const Scenario& a, const Scenario& b);

Scenario load_scenario(const std::string& path);
Scenario parse_scenario(const std::string& text, const std::string& source_name = "<scenario>");
std::string serialize_scenario(const Scenario& s);

// Nominal path stored in the scenario (SI polyline or DI steering chain).
PlannedPath scenario_nominal_path(const Scenario& s);

// Time-parameterizes `path` at the scenario dt (or dt_override > 0) and
// synthesizes the tracking law for the resulting horizon.
PathProblem make_path_problem(const Scenario& s, const PlannedPath& path, double dt_override = 0.0);
PathProblem make_path_problem(const Scenario& s, NominalTrajectory nominal, double dt_override = 0.0);

}  // namespace mcmp
