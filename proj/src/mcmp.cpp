#include "mcmp/mcmp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mcmp/cp_approx.hpp"

namespace mcmp {
namespace {

// 95% quantiles of the chi-square distribution with 1, 2, 3 degrees of freedom.
double chi2_95(int k) {
  static constexpr double q[] = {3.841458820694124, 5.991464547107979, 7.814727903251178};
  return q[std::clamp(k, 1, 3) - 1];
}

double max_position_sigma(const PathProblem& p) {
  const int k = p.position_dim();
  double top = 0.0;
  for (std::size_t t = 0; t < p.moments.sigma.size(); ++t) {
    const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(p.moments.state_block(static_cast<int>(t), k));
    top = std::max(top, eig.eigenvalues().maxCoeff());
  }
  return std::sqrt(std::max(top, 0.0));
}

const BisectionRecord* record_at(const BisectionState& s, double inflation) {
  for (auto it = s.history.rbegin(); it != s.history.rend(); ++it) {
    if (it->inflation == inflation && it->feasible) return &*it;
  }
  return nullptr;
}

bool touches_any(const NominalTrajectory& nominal, const std::vector<ConvexObstacle>& obstacles, int dims) {
  if (obstacles.empty()) return false;
  const ObstacleIndex index(obstacles, 0.0);
  const auto& w = nominal.waypoints;
  if (index.point_hits(VectorXd(w.front().head(dims)).data())) return true;
  for (std::size_t t = 1; t < w.size(); ++t) {
    const VectorXd a = w[t - 1].head(dims), b = w[t].head(dims);
    if (index.segment_hits(a.data(), b.data())) return true;
  }
  return false;
}

// The bracket endpoints, if both were evaluated, tested for a homotopy switch.
bool bracket_is_discontinuous(const Scenario& s, const BisectionState& st, const McmpOptions& o) {
  const BisectionRecord* lo = record_at(st, st.i_min);
  const BisectionRecord* hi = record_at(st, st.i_max);
  if (lo == nullptr || hi == nullptr) return false;
  const double sigma = max_position_sigma(make_path_problem(s, lo->nominal));
  return is_discontinuity(*lo, *hi, o.alpha, o.discontinuity_se, sigma, s.dimension);
}

}  // namespace

std::string_view to_string(PlanStatus s) {
  switch (s) {
    case PlanStatus::met_tolerance:
      return "met_tolerance";
    case PlanStatus::stuck:
      return "stuck";
    default:
      return "infeasible";
  }
}

McmpOptions McmpOptions::from_scenario(const Scenario& s) {
  McmpOptions o;
  o.alpha = s.alpha;
  o.bisection_steps = s.mcmp.bisection_steps;
  o.inflation_min = s.mcmp.inflation_min;
  o.inflation_max = s.mcmp.inflation_max;
  o.backtrack = s.mcmp.backtrack;
  o.max_backtracks = s.mcmp.max_backtracks;
  o.blocker_scale = s.mcmp.blocker_scale;
  o.adaptive = s.adaptive_options();
  o.smoothing = s.planner.smoothing;
  return o;
}

double hausdorff_distance(const NominalTrajectory& a, const NominalTrajectory& b, int dims) {
  auto directed = [dims](const NominalTrajectory& x, const NominalTrajectory& y) {
    double worst = 0.0;
    for (const VectorXd& p : x.waypoints) {
      double best = std::numeric_limits<double>::infinity();
      for (const VectorXd& q : y.waypoints) best = std::min(best, (p.head(dims) - q.head(dims)).squaredNorm());
      worst = std::max(worst, best);
    }
    return std::sqrt(worst);
  };
  return std::max(directed(a, b), directed(b, a));
}

bool is_discontinuity(const BisectionRecord& lower, const BisectionRecord& upper, double alpha, double se_factor,
                      double position_sigma, int dims) {
  if (!lower.feasible || !upper.feasible) return false;
  if (!(lower.inflation < upper.inflation)) return false;
  if (!(lower.cp.p_hat > alpha && upper.cp.p_hat <= alpha)) return false;
  const double se = std::hypot(lower.cp.std_err, upper.cp.std_err);
  if (!(lower.cp.p_hat - upper.cp.p_hat > se_factor * se)) return false;
  const double jump = hausdorff_distance(lower.nominal, upper.nominal, dims);
  return jump > 4.0 * (upper.inflation - lower.inflation) + 6.0 * position_sigma;
}

std::optional<BisectionState> block_and_backtrack(BisectionState state, const PathProblem& risky,
                                                  const CloseSet& close, const Workspace& ws, double initial_min,
                                                  int steps, double blocker_scale) {
  const int k = risky.position_dim();
  const WaypointCPs cps = pointwise_cps(risky.nominal, risky.moments, close);
  const auto worst = static_cast<int>(std::max_element(cps.cp.begin(), cps.cp.end()) - cps.cp.begin());
  const VectorXd center = risky.nominal.waypoints[static_cast<std::size_t>(worst)].head(k);
  const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(risky.moments.state_block(worst, k));
  const double ellipse = std::sqrt(chi2_95(k) * std::max(eig.eigenvalues().maxCoeff(), 0.0));
  const double radius = blocker_scale * ellipse;
  const VectorXd half = VectorXd::Constant(k, radius);
  const ConvexObstacle blocker = ConvexObstacle::box(center - half, center + half);
  const VectorXd goal_center =
      ws.goal.shape == GoalRegion::Shape::ball ? ws.goal.center : VectorXd(0.5 * (ws.goal.lower + ws.goal.upper));
  if (blocker.contains(ws.start.head(k)) || blocker.contains(goal_center)) return std::nullopt;
  state.virtual_obstacles.push_back(blocker);
  state.i_min = initial_min;
  state.budget += steps;
  state.backtracks += 1;
  return state;
}

PlanResult mcmp_plan(const Scenario& scenario, const McmpOptions& options, std::uint64_t seed,
                     const PlannerCache* cache) {
  if (!(options.inflation_min >= 0.0 && options.inflation_min < options.inflation_max)) {
    throw std::invalid_argument("mcmp_plan: need 0 <= I_min < I_max");
  }
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) throw std::invalid_argument("mcmp_plan: alpha must be in (0, 1)");
  if (options.bisection_steps < 1) throw std::invalid_argument("mcmp_plan: need at least one bisection step");
  const SteeringModel model = scenario.steering_model();
  const Workspace base = scenario.workspace();
  PlannerCache local;
  if (cache == nullptr) {
    local = prepare(model, base, scenario.planner_options());
    cache = &local;
  }
  const std::uint64_t calls_before = steering_calls();
  const bool smooth = options.smoothing && model.dynamics == Dynamics::single_integrator;
  AdaptiveOptions adaptive = options.adaptive;
  adaptive.alpha = options.alpha;

  PlanResult result;
  BisectionState& st = result.state;
  st.i_min = options.inflation_min;
  st.i_max = options.inflation_max;
  st.budget = options.bisection_steps;
  bool stuck = false;
  bool collapsed = false;
  while (st.iteration < st.budget) {
    if (st.i_max - st.i_min < options.inflation_resolution) {
      collapsed = true;
      break;
    }
    BisectionRecord rec;
    rec.iteration = st.iteration;
    rec.inflation = 0.5 * (st.i_min + st.i_max);
    rec.virtual_obstacles = static_cast<int>(st.virtual_obstacles.size());
    Workspace ws = base;
    ws.obstacles.insert(ws.obstacles.end(), st.virtual_obstacles.begin(), st.virtual_obstacles.end());
    ws.inflation = rec.inflation;
    rec.path = plan(*cache, ws);
    if (rec.path.feasible && smooth) rec.path = adaptive_shortcut(rec.path, ws);
    rec.feasible = rec.path.feasible;
    if (!rec.feasible) {
      // No path at this inflation: treat as p = 0 and shrink the inflation.
      rec.decision = Decision::below;
      st.i_max = rec.inflation;
    } else {
      PathProblem problem = make_path_problem(scenario, rec.path);
      const AdaptiveResult est = estimate_cp_adaptive(problem, adaptive, derive_seed(seed, static_cast<std::uint64_t>(st.iteration)));
      result.total_particles += est.estimate.m;
      rec.cp = est.estimate;
      rec.decision = est.decision;
      rec.cost = rec.path.cost;
      rec.nominal = std::move(problem.nominal);
      (rec.cp.p_hat > options.alpha ? st.i_min : st.i_max) = rec.inflation;
    }
    st.history.push_back(std::move(rec));
    ++st.iteration;

    if (options.backtrack && st.backtracks < options.max_backtracks && bracket_is_discontinuous(scenario, st, options)) {
      const BisectionRecord* risky = record_at(st, st.i_min);
      const PathProblem risky_problem = make_path_problem(scenario, risky->nominal);
      const CloseSet close = build_close_set(risky_problem.nominal, risky_problem.moments, risky_problem.workspace);
      auto next = block_and_backtrack(st, risky_problem, close, base, options.inflation_min, options.bisection_steps,
                                      options.blocker_scale);
      if (!next) {
        stuck = true;
        break;
      }
      st = std::move(*next);
    }
  }
  result.steering_calls = steering_calls() - calls_before;

  if (!stuck && bracket_is_discontinuous(scenario, st, options)) stuck = true;
  if (collapsed && st.history.size() >= 2) {
    const auto& a = st.history[st.history.size() - 1];
    const auto& b = st.history[st.history.size() - 2];
    if ((a.cp.p_hat > options.alpha) == (b.cp.p_hat > options.alpha)) stuck = true;
  }

  // SI: the last safe record (the bisection answer). DI, whose CP need not
  // be monotone in the inflation: the cheapest safe record.
  const int k = scenario.dimension;
  const bool cheapest = model.dynamics == Dynamics::double_integrator;
  const BisectionRecord* best = nullptr;
  for (const BisectionRecord& r : st.history) {
    if (!r.feasible || r.cp.p_hat > options.alpha) continue;
    if (touches_any(r.nominal, st.virtual_obstacles, k)) continue;
    if (best == nullptr || !cheapest || r.cost < best->cost) best = &r;
  }
  if (best == nullptr) {
    result.status = PlanStatus::infeasible;
    return result;
  }
  result.nominal = best->nominal;
  result.path = best->path;
  result.inflation = best->inflation;
  result.cp = best->cp;
  result.decision = best->decision;
  result.cost = best->cost;
  result.status = stuck ? PlanStatus::stuck : PlanStatus::met_tolerance;
  return result;
}

}  // namespace mcmp
