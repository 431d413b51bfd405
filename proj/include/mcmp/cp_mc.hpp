#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "mcmp/geometry.hpp"
#include "mcmp/lqg.hpp"

namespace mcmp {

// Everything needed to evaluate the CP of one nominal trajectory: the
// trajectory, the tracking law synthesized for its horizon, the resulting
// deviation moments, and the (true, uninflated) obstacles.
struct PathProblem {
  NominalTrajectory nominal;
  TrackingLaw law;
  MomentSchedule moments;
  Workspace workspace;

  static PathProblem build(NominalTrajectory nominal, const DiscreteLQGSystem& sys, const TrackingCost& cost,
                           const MatrixXd& P0, Workspace workspace);
  int position_dim() const { return workspace.dim(); }
};

enum class EstimatorMethod { simple, vr };
std::string_view to_string(EstimatorMethod m);

struct CPEstimate {
  double p_hat = 0.0;  // clamped to [0, 1]
  double p_raw = 0.0;  // unclamped value (the CV correction can leave [0, 1])
  double var_hat = 0.0;
  double std_err = 0.0;
  std::int64_t m = 0;
  EstimatorMethod method = EstimatorMethod::simple;
  double beta = 0.0;       // vr only
  double theta = 0.0;      // vr only: exact control-variate mean
  double theta_hat = 0.0;  // vr only: IS estimate of theta
};

struct ShiftSolution {
  ShiftSchedule shifts;  // injections 0..t, combined-dimension vectors
  VectorXd lambda;       // G^{-1} target
  MatrixXd gramian;      // G
  // Sum over injections of shift^T N_j^+ shift (equals lambda^T target).
  double objective() const { return lambda.dot(gramian * lambda); }
};

// Minimum-energy mean shifts of injections 0..t that move the expected
// position deviation at step t to `target` (the first target.size() state
// coordinates). Throws NumericalError when the weighted Gramian is singular.
ShiftSolution solve_shift(const TrackingLaw& law, int t, const VectorXd& target);

struct ISComponent {
  std::size_t point = 0;  // index into CloseSet::points
  int t = 0;
  double weight = 0.0;
  ShiftSolution shift;
  double half_quad = 0.0;  // 0.5 * lambda^T G lambda
};

struct ISDistribution {
  std::vector<ISComponent> components;
  std::vector<double> cumulative;  // running sums of weights, last entry 1
  // Index of the component selected by a uniform draw in (0, 1].
  std::size_t select(double u) const;
};

// One component per close point flagged in_mixture, weighted by hit_prob.
// Throws std::invalid_argument on an empty mixture.
ISDistribution build_is_distribution(const CloseSet& close, const TrackingLaw& law, const MomentSchedule& moments);

// 1 iff the polyline through the rollout positions meets an obstacle.
bool collision_indicator(const Rollout& rollout, const Workspace& ws);

// Number of (waypoint, close point) half-plane crossings of the rollout.
int control_variate_value(const Rollout& rollout, const NominalTrajectory& nominal, const CloseSet& close);

// P(X)/Q(X) for a rollout whose noise is stored per injection, with Q the
// mixture. Evaluated from per-step Gaussian log densities (log-sum-exp over
// components). Returns 0 if every component density underflows.
double likelihood_ratio(const Rollout& rollout, const ISDistribution& isd, const TrackingLaw& law);

// Rollout drawn from the mixture exactly as the vr estimator draws particle
// `particle`; `component` receives the selected mixture index.
Rollout sample_mixture_rollout(const PathProblem& problem, const ISDistribution& isd, std::uint64_t seed,
                               std::uint64_t particle, std::size_t* component = nullptr);

CPEstimate simple_mc(const PathProblem& problem, std::int64_t m, std::uint64_t seed);

// Control-variate + mixture importance sampling estimator. Falls back to
// simple_mc when no obstacle point is close to the path.
CPEstimate estimate_cp_vr(const PathProblem& problem, std::int64_t m, std::uint64_t seed,
                          const CloseSetOptions& options = {});

// Per-particle weighted samples of the vr estimator, exposed for diagnostics.
struct VRSamples {
  std::vector<double> fL;  // f * L
  std::vector<double> hL;  // h * L
  std::vector<double> L;
  std::vector<int> f;
  std::vector<int> h;
  double theta = 0.0;
};
VRSamples sample_vr(const PathProblem& problem, const CloseSet& close, const ISDistribution& isd,
                    std::int64_t first_particle, std::int64_t count, std::uint64_t seed);
CPEstimate vr_estimate_from_samples(const VRSamples& samples);

enum class Decision { above, below, inconclusive };
std::string_view to_string(Decision d);

struct AdaptiveOptions {
  double alpha = 0.01;
  std::int64_t max_m = 20000;
  std::int64_t batch = 500;
  double confidence_z = 2.0;
  // Also stop once std_err <= rel_tol * alpha; 0 disables the rule.
  double rel_tol = 0.05;
};

struct AdaptiveResult {
  CPEstimate estimate;
  Decision decision = Decision::inconclusive;
};

// Adds vr batches until |p_hat - alpha| > z * std_err, the relative precision
// rule fires, or max_m particles were used.
AdaptiveResult estimate_cp_adaptive(const PathProblem& problem, const AdaptiveOptions& options, std::uint64_t seed);

}  // namespace mcmp
