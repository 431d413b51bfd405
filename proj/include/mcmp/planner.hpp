#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mcmp/geometry.hpp"
#include "mcmp/lqg.hpp"

namespace mcmp {

enum class Dynamics { single_integrator, double_integrator };

// Local steering model. Single integrator: state = position, cost = arc
// length. Double integrator: state = [position; velocity], cost =
// integral of (time_weight + u^T R u) dt with free final time.
struct SteeringModel {
  Dynamics dynamics = Dynamics::single_integrator;
  int dim = 2;  // workspace dimension
  double time_weight = 1.0;
  MatrixXd R;  // dim x dim, double integrator only

  int state_dim() const { return dynamics == Dynamics::single_integrator ? dim : 2 * dim; }
};

struct SteerResult {
  bool ok = false;
  double cost = 0.0;
  double duration = 0.0;  // optimal time (double integrator)
};

// Optimal local connection cost. For the double integrator, the free final
// time is found by bracketing the minimum of cost(tau) on a log grid over
// [tau_min, tau_max] and bisecting the derivative; ok = false when it lands
// on the bracket boundary. Each call increments steering_calls().
SteerResult steer_cost(const SteeringModel& model, const VectorXd& from, const VectorXd& to);

// State at time s in [0, tau] along the optimal double integrator connection.
VectorXd di_state_at(const SteeringModel& model, const VectorXd& from, const VectorXd& to, double tau, double s);

struct LocalTrajectory {
  std::vector<VectorXd> states;  // samples including both endpoints
  std::vector<double> times;
  double cost = 0.0;
  double duration = 0.0;
  bool ok = false;
};

// Local trajectory sampled densely enough that consecutive positions are at
// most `resolution` apart. SI returns the two endpoints.
LocalTrajectory steer(const SteeringModel& model, const VectorXd& from, const VectorXd& to, double resolution);

// Global count of steer_cost evaluations (instrumentation for cache reuse).
std::uint64_t steering_calls();

struct PlannerOptions {
  int nodes = 1000;
  std::uint64_t seed = 1;
  double resolution = 0.05;     // collision check spacing along DI trajectories
  double velocity_bound = 1.0;  // DI node velocities sampled in [-v, v]^dim
  int goal_samples = 16;
  double radius_scale = 1.0;    // multiplies the connection radius
};

struct CachedEdge {
  int node = 0;  // the other endpoint
  double cost = 0.0;
  double duration = 0.0;
};

struct PlannerCache {
  SteeringModel model;
  PlannerOptions options;
  AxisBox bounds;
  std::vector<VectorXd> nodes;  // node 0 is the start, then goal samples, then free samples
  std::vector<int> goal_nodes;
  double radius = 0.0;
  std::vector<std::vector<CachedEdge>> out_edges;  // sorted by node index
  std::vector<std::vector<CachedEdge>> in_edges;
};

// Samples nodes uniformly in the bounds (plus the start and goal-region
// samples) and caches all local connections with cost at most r_n.
PlannerCache prepare(const SteeringModel& model, const Workspace& ws, const PlannerOptions& options);

// Connection radius gamma * (log n / n)^(1/d) for n nodes in `bounds`.
double connection_radius(int n, int d, double volume);

struct PlannedPath {
  std::vector<VectorXd> states;  // node states start -> goal
  std::vector<double> durations;  // per edge, double integrator only
  double cost = 0.0;
  bool feasible = false;
};

// FMT*-style expansion over the cached graph with lazy collision checks
// against every obstacle of `ws` at ws.inflation. Nodes in collision are
// skipped.
PlannedPath plan(const PlannerCache& cache, const Workspace& ws);

bool edge_in_collision(const SteeringModel& model, const VectorXd& from, const VectorXd& to, double duration,
                       const ObstacleIndex& index, const AxisBox& bounds, double resolution);

double path_length(const std::vector<VectorXd>& points);

// Rubber-band smoothing for single-integrator paths: greedy shortcuts
// followed by corner cuts whose depth halves on collision, repeated until the
// length improvement falls below tol. Never increases the cost.
PlannedPath adaptive_shortcut(const PlannedPath& path, const Workspace& ws, double tol = 1e-6);

// SI: constant-speed traversal in ceil(L / (speed dt)) steps with
// finite-difference controls. DI: each connection is rounded to a whole
// number of steps (at least 2) and followed with the discrete minimum-energy
// controls that hit the next node exactly.
NominalTrajectory time_parameterize(const PlannedPath& path, const SteeringModel& model,
                                    const DiscreteLQGSystem& sys, double speed);

// Double integrator path through the given states with optimal durations.
PlannedPath connect_states(const SteeringModel& model, const std::vector<VectorXd>& states);

}  // namespace mcmp
