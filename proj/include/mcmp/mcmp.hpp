#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "mcmp/cp_mc.hpp"
#include "mcmp/planner.hpp"
#include "mcmp/scenario.hpp"

namespace mcmp {

struct McmpOptions {
  double alpha = 0.01;
  int bisection_steps = 10;
  double inflation_min = 0.0;
  double inflation_max = 1.0;
  bool backtrack = true;
  int max_backtracks = 3;
  double blocker_scale = 2.0;  // blocker radius / largest 95% ellipse radius
  AdaptiveOptions adaptive;
  double inflation_resolution = 1e-4;
  double discontinuity_se = 5.0;  // CP drop, in combined standard errors
  bool smoothing = true;

  static McmpOptions from_scenario(const Scenario& s);
};

struct BisectionRecord {
  int iteration = 0;
  double inflation = 0.0;
  bool feasible = false;
  double cost = 0.0;
  CPEstimate cp;
  Decision decision = Decision::inconclusive;
  int virtual_obstacles = 0;  // blockers active when this record was planned
  PlannedPath path;
  NominalTrajectory nominal;
};

struct BisectionState {
  double i_min = 0.0;
  double i_max = 1.0;
  int iteration = 0;
  int budget = 0;
  int backtracks = 0;
  std::vector<BisectionRecord> history;
  std::vector<ConvexObstacle> virtual_obstacles;
};

enum class PlanStatus { met_tolerance, stuck, infeasible };
std::string_view to_string(PlanStatus s);

struct PlanResult {
  NominalTrajectory nominal;
  PlannedPath path;
  double inflation = 0.0;
  CPEstimate cp;
  Decision decision = Decision::inconclusive;
  double cost = 0.0;
  PlanStatus status = PlanStatus::infeasible;
  BisectionState state;
  std::int64_t total_particles = 0;
  std::uint64_t steering_calls = 0;  // steer_cost evaluations during the bisection
};

// Bisection on obstacle inflation against the CP target. Reuses `cache` when
// given, otherwise prepares one from the scenario planner settings.
PlanResult mcmp_plan(const Scenario& scenario, const McmpOptions& options, std::uint64_t seed,
                     const PlannerCache* cache = nullptr);

// True when the pair (lower, upper) looks like a homotopy switch: inflation
// went up, the CP fell past alpha by more than `se_factor` combined standard
// errors, and the nominal path jumped (Hausdorff distance) by much more than
// the inflation change explains.
bool is_discontinuity(const BisectionRecord& lower, const BisectionRecord& upper, double alpha, double se_factor,
                      double position_sigma, int dims);

double hausdorff_distance(const NominalTrajectory& a, const NominalTrajectory& b, int dims);

// Blocks the risky route with a hypercube centred at its most collision-prone
// waypoint, resets I_min to `initial_min` and extends the budget by `steps`.
// Returns std::nullopt when the blocker would cover the start or goal.
std::optional<BisectionState> block_and_backtrack(BisectionState state, const PathProblem& risky,
                                                  const CloseSet& close, const Workspace& ws, double initial_min,
                                                  int steps, double blocker_scale);

}  // namespace mcmp
