#include "mcmp/planner.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <limits>
#include <cmath>
#include <numbers>
#include <queue>
#include <stdexcept>

#include "mcmp/rng.hpp"

namespace mcmp {
namespace {

std::atomic<std::uint64_t> g_steering_calls{0};

constexpr double kTauMin = 1e-3;
constexpr int kTauGrid = 64;

// Quadratic form pieces of the double integrator connection cost.
struct DIPieces {
  VectorXd a;   // p1 - p0
  VectorXd v0;  // initial velocity
  VectorXd dv;  // v1 - v0
};

DIPieces di_pieces(const SteeringModel& m, const VectorXd& from, const VectorXd& to) {
  const int k = m.dim;
  return {to.head(k) - from.head(k), from.tail(k), to.tail(k) - from.tail(k)};
}

double di_cost(const SteeringModel& m, const DIPieces& q, double tau) {
  const VectorXd dp = q.a - tau * q.v0;
  const VectorXd Rdp = m.R * dp;
  const VectorXd Rdv = m.R * q.dv;
  return m.time_weight * tau + 12.0 / (tau * tau * tau) * dp.dot(Rdp) - 12.0 / (tau * tau) * dp.dot(Rdv) +
         4.0 / tau * q.dv.dot(Rdv);
}

double di_cost_derivative(const SteeringModel& m, const DIPieces& q, double tau) {
  const VectorXd dp = q.a - tau * q.v0;
  const VectorXd Rdp = m.R * dp;
  const VectorXd Rdv = m.R * q.dv;
  const double t2 = tau * tau, t3 = t2 * tau, t4 = t3 * tau;
  const double pp = dp.dot(Rdp), pv = dp.dot(Rdv), vv = q.dv.dot(Rdv);
  const double bp = q.v0.dot(Rdp), bv = q.v0.dot(Rdv);
  return m.time_weight - 36.0 / t4 * pp - 24.0 / t3 * bp + 24.0 / t3 * pv + 12.0 / t2 * bv - 4.0 / t2 * vv;
}

void validate_model(const SteeringModel& m) {
  if (m.dim < 1) throw std::invalid_argument("steering model: dimension must be positive");
  if (m.dynamics == Dynamics::double_integrator) {
    if (m.R.rows() != m.dim || m.R.cols() != m.dim) throw std::invalid_argument("steering model: R has wrong shape");
    if (!(m.time_weight > 0.0)) throw std::invalid_argument("steering model: time weight must be positive");
  }
}

bool position_in_bounds(const double* p, const AxisBox& bounds) {
  for (Eigen::Index i = 0; i < bounds.lower.size(); ++i) {
    if (p[i] < bounds.lower(i) || p[i] > bounds.upper(i)) return false;
  }
  return true;
}

}  // namespace

std::uint64_t steering_calls() { return g_steering_calls.load(); }

SteerResult steer_cost(const SteeringModel& model, const VectorXd& from, const VectorXd& to) {
  g_steering_calls.fetch_add(1, std::memory_order_relaxed);
  if (model.dynamics == Dynamics::single_integrator) {
    const double len = (to.head(model.dim) - from.head(model.dim)).norm();
    return {true, len, len};
  }
  if ((to - from).norm() < 1e-12) return {true, 0.0, 0.0};
  const DIPieces q = di_pieces(model, from, to);
  // c(tau) >= w tau, so the optimum cannot lie beyond c(h) / w for any h.
  const double h = 1.0 + q.a.norm() + q.dv.norm();
  const double tau_max = std::max(10.0 * kTauMin, di_cost(model, q, h) / model.time_weight);
  const double ratio = std::pow(tau_max / kTauMin, 1.0 / (kTauGrid - 1));
  int best = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  double tau = kTauMin;
  std::vector<double> grid(kTauGrid);
  for (int i = 0; i < kTauGrid; ++i, tau *= ratio) {
    grid[static_cast<std::size_t>(i)] = tau;
    const double c = di_cost(model, q, tau);
    if (c < best_cost) {
      best_cost = c;
      best = i;
    }
  }
  if (best == 0) return {false, best_cost, kTauMin};
  double lo = grid[static_cast<std::size_t>(best - 1)];
  double hi = best + 1 < kTauGrid ? grid[static_cast<std::size_t>(best + 1)] : tau_max;
  if (di_cost_derivative(model, q, lo) >= 0.0 || di_cost_derivative(model, q, hi) <= 0.0) {
    // Derivative does not change sign across the cell: keep the grid optimum.
    return {true, best_cost, grid[static_cast<std::size_t>(best)]};
  }
  for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (di_cost_derivative(model, q, mid) < 0.0 ? lo : hi) = mid;
  }
  const double t_star = 0.5 * (lo + hi);
  return {true, di_cost(model, q, t_star), t_star};
}

VectorXd di_state_at(const SteeringModel& model, const VectorXd& from, const VectorXd& to, double tau, double s) {
  const int k = model.dim;
  if (tau <= 0.0) return from;
  const VectorXd p0 = from.head(k), v0 = from.tail(k);
  const VectorXd dp = to.head(k) - p0 - tau * v0;
  const VectorXd dv = to.tail(k) - v0;
  // G(tau)^{-1} d with the R factors cancelling against G(s): scalar 2x2 blocks.
  const double t2 = tau * tau, t3 = t2 * tau;
  const VectorXd lp = 12.0 / t3 * dp - 6.0 / t2 * dv;
  const VectorXd lv = -6.0 / t2 * dp + 4.0 / tau * dv;
  // e^{A^T (tau - s)} maps (lp, lv) to (lp, (tau - s) lp + lv).
  const double r = tau - s;
  const VectorXd mv = r * lp + lv;
  const double s2 = s * s, s3 = s2 * s;
  VectorXd out(2 * k);
  out.head(k) = p0 + s * v0 + (s3 / 3.0) * lp + (s2 / 2.0) * mv;
  out.tail(k) = v0 + (s2 / 2.0) * lp + s * mv;
  return out;
}

LocalTrajectory steer(const SteeringModel& model, const VectorXd& from, const VectorXd& to, double resolution) {
  validate_model(model);
  LocalTrajectory out;
  const SteerResult r = steer_cost(model, from, to);
  out.cost = r.cost;
  out.duration = r.duration;
  out.ok = r.ok;
  if (!r.ok) return out;
  if (model.dynamics == Dynamics::single_integrator) {
    out.states = {from, to};
    out.times = {0.0, r.duration};
    return out;
  }
  if (r.duration == 0.0) return out;
  int samples = 32;
  for (int pass = 0; pass < 2; ++pass) {
    out.states.clear();
    out.times.clear();
    double max_gap = 0.0;
    for (int i = 0; i <= samples; ++i) {
      const double s = r.duration * i / samples;
      out.times.push_back(s);
      out.states.push_back(i == samples ? to : di_state_at(model, from, to, r.duration, s));
      if (i > 0) max_gap = std::max(max_gap, (out.states[static_cast<std::size_t>(i)].head(model.dim) -
                                              out.states[static_cast<std::size_t>(i) - 1].head(model.dim))
                                                 .norm());
    }
    if (max_gap <= resolution) break;
    samples = static_cast<int>(std::ceil(samples * max_gap / resolution)) + 1;
  }
  return out;
}

double connection_radius(int n, int d, double volume) {
  const double unit_ball = std::pow(std::numbers::pi, d / 2.0) / std::tgamma(d / 2.0 + 1.0);
  const double gamma = 2.0 * std::pow(volume / (d * unit_ball), 1.0 / d);
  return gamma * std::pow(std::log(static_cast<double>(n)) / n, 1.0 / d);
}

PlannerCache prepare(const SteeringModel& model, const Workspace& ws, const PlannerOptions& options) {
  validate_model(model);
  if (options.nodes < 2) throw std::invalid_argument("prepare: need at least two nodes");
  const int k = model.dim;
  if (ws.dim() != k) throw std::invalid_argument("prepare: workspace and model dimensions differ");
  if (!((ws.bounds.upper - ws.bounds.lower).array() > 0.0).all()) throw std::invalid_argument("prepare: degenerate bounds");
  if (ws.start.size() != model.state_dim()) throw std::invalid_argument("prepare: start has wrong dimension");
  PlannerCache cache;
  cache.model = model;
  cache.options = options;
  cache.bounds = ws.bounds;
  const bool di = model.dynamics == Dynamics::double_integrator;
  const int sd = model.state_dim();

  // Uniform draws come from a dedicated counter stream, one particle per node.
  const std::uint64_t seed = derive_seed(options.seed, 0x706c616e);
  auto uniform_source = [seed](std::uint64_t id) {
    return [stream = ParticleStream(seed, id), step = std::uint32_t{0}, block = std::uint32_t{0}, buf = std::array<double, 2>{},
            used = 2]() mutable {
      if (used == 2) {
        buf = stream.uniforms(step, block++);
        used = 0;
      }
      return buf[static_cast<std::size_t>(used++)] - 0x1.0p-53;  // [0, 1)
    };
  };

  cache.nodes.push_back(ws.start);
  for (int g = 0; g < options.goal_samples; ++g) {
    auto u = uniform_source(static_cast<std::uint64_t>(g));
    VectorXd x = VectorXd::Zero(sd);
    x.head(k) = ws.goal.sample(u);
    cache.goal_nodes.push_back(static_cast<int>(cache.nodes.size()));
    cache.nodes.push_back(x);
  }
  for (int i = 0; i < options.nodes; ++i) {
    auto u = uniform_source(static_cast<std::uint64_t>(options.goal_samples + i));
    VectorXd x(sd);
    for (int c = 0; c < k; ++c) x(c) = ws.bounds.lower(c) + u() * (ws.bounds.upper(c) - ws.bounds.lower(c));
    if (di) {
      for (int c = 0; c < k; ++c) x(k + c) = (2.0 * u() - 1.0) * options.velocity_bound;
    }
    cache.nodes.push_back(x);
  }

  const int total = static_cast<int>(cache.nodes.size());
  double volume = ws.bounds.volume();
  if (di) volume *= std::pow(2.0 * options.velocity_bound, k);
  cache.radius = options.radius_scale * connection_radius(total, sd, volume);
  cache.out_edges.assign(static_cast<std::size_t>(total), {});
  cache.in_edges.assign(static_cast<std::size_t>(total), {});
  for (int i = 0; i < total; ++i) {
    for (int j = di ? 0 : i + 1; j < total; ++j) {
      if (i == j) continue;
      const VectorXd& a = cache.nodes[static_cast<std::size_t>(i)];
      const VectorXd& b = cache.nodes[static_cast<std::size_t>(j)];
      if (!di && (a - b).squaredNorm() > cache.radius * cache.radius) continue;
      const SteerResult r = steer_cost(model, a, b);
      if (!r.ok || r.cost > cache.radius) continue;
      cache.out_edges[static_cast<std::size_t>(i)].push_back({j, r.cost, r.duration});
      cache.in_edges[static_cast<std::size_t>(j)].push_back({i, r.cost, r.duration});
      if (!di) {
        cache.out_edges[static_cast<std::size_t>(j)].push_back({i, r.cost, r.duration});
        cache.in_edges[static_cast<std::size_t>(i)].push_back({j, r.cost, r.duration});
      }
    }
  }
  for (auto* lists : {&cache.out_edges, &cache.in_edges}) {
    for (auto& l : *lists) {
      std::sort(l.begin(), l.end(), [](const CachedEdge& x, const CachedEdge& y) { return x.node < y.node; });
    }
  }
  return cache;
}

bool edge_in_collision(const SteeringModel& model, const VectorXd& from, const VectorXd& to, double duration,
                       const ObstacleIndex& index, const AxisBox& bounds, double resolution) {
  const int k = model.dim;
  if (model.dynamics == Dynamics::single_integrator || duration <= 0.0) {
    if (!position_in_bounds(from.data(), bounds) || !position_in_bounds(to.data(), bounds)) return true;
    return !index.empty() && index.segment_hits(from.data(), to.data());
  }
  // Sample the connection finely enough that straight chords between samples
  // stay within `resolution` of the curve in position.
  VectorXd prev = from;
  const VectorXd v0 = from.tail(k);
  const double speed = std::max({v0.norm(), to.tail(k).norm(), (to.head(k) - from.head(k)).norm() / duration});
  const int samples = std::max(8, static_cast<int>(std::ceil(4.0 * speed * duration / resolution)));
  for (int i = 1; i <= samples; ++i) {
    const VectorXd cur = i == samples ? to : di_state_at(model, from, to, duration, duration * i / samples);
    if (!position_in_bounds(cur.data(), bounds)) return true;
    if (!index.empty() && index.segment_hits(prev.data(), cur.data())) return true;
    prev = cur;
  }
  return false;
}

PlannedPath plan(const PlannerCache& cache, const Workspace& ws) {
  const int total = static_cast<int>(cache.nodes.size());
  const ObstacleIndex index(ws.obstacles, ws.inflation);
  std::vector<char> valid(static_cast<std::size_t>(total), 0);
  for (int i = 0; i < total; ++i) {
    const double* p = cache.nodes[static_cast<std::size_t>(i)].data();
    valid[static_cast<std::size_t>(i)] = position_in_bounds(p, cache.bounds) && (index.empty() || !index.point_hits(p));
  }
  PlannedPath out;
  if (!valid[0]) return out;
  std::vector<char> is_goal(static_cast<std::size_t>(total), 0);
  for (int g : cache.goal_nodes) is_goal[static_cast<std::size_t>(g)] = 1;

  enum : char { kUnvisited, kOpen, kClosed };
  std::vector<char> state(static_cast<std::size_t>(total), kUnvisited);
  std::vector<double> cost(static_cast<std::size_t>(total), std::numeric_limits<double>::infinity());
  std::vector<int> parent(static_cast<std::size_t>(total), -1);
  std::vector<double> parent_duration(static_cast<std::size_t>(total), 0.0);
  using Entry = std::pair<double, int>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  cost[0] = 0.0;
  state[0] = kOpen;
  open.push({0.0, 0});
  std::vector<int> fresh;
  while (!open.empty()) {
    const int z = open.top().second;
    open.pop();
    if (is_goal[static_cast<std::size_t>(z)]) {
      std::vector<int> chain;
      for (int v = z; v != -1; v = parent[static_cast<std::size_t>(v)]) chain.push_back(v);
      std::reverse(chain.begin(), chain.end());
      for (std::size_t i = 0; i < chain.size(); ++i) {
        out.states.push_back(cache.nodes[static_cast<std::size_t>(chain[i])]);
        if (i > 0) out.durations.push_back(parent_duration[static_cast<std::size_t>(chain[i])]);
      }
      out.cost = cost[static_cast<std::size_t>(z)];
      out.feasible = true;
      return out;
    }
    fresh.clear();
    for (const CachedEdge& e : cache.out_edges[static_cast<std::size_t>(z)]) {
      const int x = e.node;
      if (!valid[static_cast<std::size_t>(x)] || state[static_cast<std::size_t>(x)] != kUnvisited) continue;
      const CachedEdge* best = nullptr;
      double best_cost = std::numeric_limits<double>::infinity();
      for (const CachedEdge& in : cache.in_edges[static_cast<std::size_t>(x)]) {
        if (state[static_cast<std::size_t>(in.node)] != kOpen) continue;
        const double c = cost[static_cast<std::size_t>(in.node)] + in.cost;
        if (c < best_cost) {
          best_cost = c;
          best = &in;
        }
      }
      if (best == nullptr) continue;
      if (edge_in_collision(cache.model, cache.nodes[static_cast<std::size_t>(best->node)],
                            cache.nodes[static_cast<std::size_t>(x)], best->duration, index, cache.bounds,
                            cache.options.resolution)) {
        continue;
      }
      cost[static_cast<std::size_t>(x)] = best_cost;
      parent[static_cast<std::size_t>(x)] = best->node;
      parent_duration[static_cast<std::size_t>(x)] = best->duration;
      fresh.push_back(x);
    }
    state[static_cast<std::size_t>(z)] = kClosed;
    for (int x : fresh) {
      state[static_cast<std::size_t>(x)] = kOpen;
      open.push({cost[static_cast<std::size_t>(x)], x});
    }
  }
  return out;
}

double path_length(const std::vector<VectorXd>& points) {
  double len = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) len += (points[i] - points[i - 1]).norm();
  return len;
}

PlannedPath adaptive_shortcut(const PlannedPath& path, const Workspace& ws, double tol) {
  if (!path.feasible || path.states.size() < 3) return path;
  const ObstacleIndex index(ws.obstacles, ws.inflation);
  auto blocked = [&](const VectorXd& p, const VectorXd& q) {
    return !index.empty() && index.segment_hits(p.data(), q.data());
  };
  constexpr std::size_t kMaxVertices = 4000;
  constexpr double kMinCut = 1e-4;
  std::vector<VectorXd> pts = path.states;
  for (int pass = 0; pass < 200; ++pass) {
    const double before = path_length(pts);
    // Greedy shortcuts: from each kept vertex jump to the farthest visible one.
    std::vector<VectorXd> kept{pts.front()};
    for (std::size_t i = 0; i + 1 < pts.size();) {
      std::size_t j = pts.size() - 1;
      while (j > i + 1 && blocked(pts[i], pts[j])) --j;
      kept.push_back(pts[j]);
      i = j;
    }
    pts.swap(kept);
    // Corner cuts.
    std::vector<VectorXd> cut{pts.front()};
    for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
      const VectorXd& a = cut.back();
      const VectorXd& v = pts[i];
      const VectorXd& b = pts[i + 1];
      const double detour = (a - v).norm() + (v - b).norm() - (a - b).norm();
      if (detour <= 1e-12 * (1.0 + (a - b).norm())) continue;  // collinear vertex
      bool done = false;
      if (pts.size() < kMaxVertices) {
        for (double lam = 0.5; lam >= kMinCut; lam *= 0.5) {
          VectorXd p = v + lam * (a - v);
          VectorXd q = v + lam * (b - v);
          if (!blocked(p, q)) {
            cut.push_back(std::move(p));
            cut.push_back(std::move(q));
            done = true;
            break;
          }
        }
      }
      if (!done) cut.push_back(v);
    }
    cut.push_back(pts.back());
    if (path_length(cut) <= path_length(pts)) pts.swap(cut);
    const double after = path_length(pts);
    if (before - after <= tol * before) break;
  }
  PlannedPath out;
  out.states = std::move(pts);
  out.cost = path_length(out.states);
  out.feasible = true;
  if (out.cost > path.cost) return path;
  return out;
}

NominalTrajectory time_parameterize(const PlannedPath& path, const SteeringModel& model, const DiscreteLQGSystem& sys,
                                    double speed) {
  if (!(sys.dt > 0.0)) throw std::invalid_argument("time_parameterize: dt must be positive");
  if (path.states.empty()) throw std::invalid_argument("time_parameterize: empty path");
  NominalTrajectory nom;
  nom.dt = sys.dt;
  const Eigen::CompleteOrthogonalDecomposition<MatrixXd> bpinv(sys.B);
  if (model.dynamics == Dynamics::single_integrator) {
    if (!(speed > 0.0)) throw std::invalid_argument("time_parameterize: speed must be positive");
    const double L = path_length(path.states);
    const int N = std::max(1, static_cast<int>(std::ceil(L / (speed * sys.dt) - 1e-9)));
    std::size_t seg = 0;
    double seg_start = 0.0;
    for (int i = 0; i <= N; ++i) {
      if (i == N) {
        nom.waypoints.push_back(path.states.back());
        break;
      }
      const double s = L * i / N;
      while (seg + 2 < path.states.size() &&
             seg_start + (path.states[seg + 1] - path.states[seg]).norm() < s) {
        seg_start += (path.states[seg + 1] - path.states[seg]).norm();
        ++seg;
      }
      if (path.states.size() == 1) {
        nom.waypoints.push_back(path.states.front());
        continue;
      }
      const VectorXd& a = path.states[seg];
      const VectorXd& b = path.states[seg + 1];
      const double len = (b - a).norm();
      const double f = len > 0.0 ? std::clamp((s - seg_start) / len, 0.0, 1.0) : 0.0;
      nom.waypoints.push_back(a + f * (b - a));
    }
    for (int t = 0; t < N; ++t) {
      const VectorXd& x0 = nom.waypoints[static_cast<std::size_t>(t)];
      const VectorXd& x1 = nom.waypoints[static_cast<std::size_t>(t) + 1];
      nom.controls.push_back(bpinv.solve(x1 - sys.A * x0));
    }
    return nom;
  }

  // Double integrator: exact-endpoint discrete minimum-energy connections.
  const int n = sys.state_dim();
  const int m = sys.input_dim();
  const MatrixXd R = model.R.size() > 0 ? model.R : MatrixXd::Identity(m, m);
  const Eigen::LLT<MatrixXd> rllt(R);
  nom.waypoints.push_back(path.states.front());
  for (std::size_t e = 0; e + 1 < path.states.size(); ++e) {
    const VectorXd& xa = path.states[e];
    const VectorXd& xb = path.states[e + 1];
    double tau = e < path.durations.size() ? path.durations[e] : 0.0;
    if (!(tau > 0.0)) tau = steer_cost(model, xa, xb).duration;
    if (!(tau > 0.0) && (xb - xa).norm() < 1e-12) continue;
    const int steps = std::max(2, static_cast<int>(std::llround(tau / sys.dt)));
    // Columns of the reachability map [A^{steps-1} B, ..., B].
    std::vector<MatrixXd> blocks(static_cast<std::size_t>(steps));
    MatrixXd power = MatrixXd::Identity(n, n);
    for (int i = steps - 1; i >= 0; --i) {
      blocks[static_cast<std::size_t>(i)] = power * sys.B;
      power = sys.A * power;
    }
    const VectorXd gap = xb - power * xa;  // power == A^steps here
    MatrixXd gram = MatrixXd::Zero(n, n);
    for (const MatrixXd& b : blocks) gram.noalias() += b * rllt.solve(b.transpose());
    const Eigen::LDLT<MatrixXd> gl(gram);
    if (gl.info() != Eigen::Success) throw NumericalError("time_parameterize: singular reachability Gramian");
    const VectorXd mult = gl.solve(gap);
    VectorXd x = xa;
    for (int i = 0; i < steps; ++i) {
      const VectorXd u = rllt.solve(blocks[static_cast<std::size_t>(i)].transpose() * mult);
      nom.controls.push_back(u);
      x = sys.A * x + sys.B * u;
      nom.waypoints.push_back(i + 1 == steps ? xb : x);
    }
  }
  if (nom.controls.empty()) throw std::invalid_argument("time_parameterize: path has zero duration");
  return nom;
}

PlannedPath connect_states(const SteeringModel& model, const std::vector<VectorXd>& states) {
  PlannedPath out;
  out.states = states;
  out.feasible = !states.empty();
  for (std::size_t i = 1; i < states.size(); ++i) {
    const SteerResult r = steer_cost(model, states[i - 1], states[i]);
    if (!r.ok) throw NumericalError("connect_states: steering failed between consecutive states");
    out.cost += r.cost;
    if (model.dynamics == Dynamics::double_integrator) out.durations.push_back(r.duration);
  }
  return out;
}

}  // namespace mcmp
