#include "mcmp/cp_mc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mcmp/parallel.hpp"

namespace mcmp {
namespace {

constexpr std::int64_t kChunk = 1024;

// Flattened per-path data shared by the samplers.
struct KernelData {
  int T = 0;
  int k = 0;
  int n = 0;
  std::vector<double> nominal_pos;  // (T+1) x k
  ObstacleIndex obstacles;
  // Close points grouped by waypoint: [point_begin[t], point_begin[t+1]).
  std::vector<std::size_t> point_begin;
  std::vector<double> point_normal;  // k per point
  std::vector<double> point_mdist;
  int last_point_t = -1;
  // Mixture components grouped by waypoint.
  std::vector<std::size_t> comp_begin;
  std::vector<double> comp_lambda;  // k per component, in grouped order
  std::vector<double> comp_half_quad;
  std::vector<double> comp_log_weight;
  std::vector<std::size_t> comp_slot;  // grouped order -> isd index
  int last_comp_t = -1;
  std::vector<double> shifts;              // per isd component, (t+1) x n
  std::vector<std::size_t> shift_offset;  // per isd component
};

KernelData make_kernel(const PathProblem& problem, const CloseSet* close, const ISDistribution* isd) {
  KernelData d;
  d.T = problem.law.horizon;
  d.k = problem.position_dim();
  d.n = problem.law.combined_dim();
  if (d.k > problem.law.state_dim) throw std::invalid_argument("workspace dimension exceeds state dimension");
  d.nominal_pos.reserve(static_cast<std::size_t>((d.T + 1) * d.k));
  for (const VectorXd& w : problem.nominal.waypoints) d.nominal_pos.insert(d.nominal_pos.end(), w.data(), w.data() + d.k);
  d.obstacles = ObstacleIndex(problem.workspace.obstacles, problem.workspace.inflation);
  const auto steps = static_cast<std::size_t>(d.T) + 1;

  d.point_begin.assign(steps + 1, 0);
  if (close != nullptr) {
    std::vector<std::size_t> order(close->points.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return close->points[a].t < close->points[b].t; });
    for (std::size_t i : order) {
      const ClosePoint& p = close->points[i];
      d.point_normal.insert(d.point_normal.end(), p.normal.data(), p.normal.data() + d.k);
      d.point_mdist.push_back(p.mdist);
      d.point_begin[static_cast<std::size_t>(p.t) + 1]++;
      d.last_point_t = std::max(d.last_point_t, p.t);
    }
    for (std::size_t t = 0; t < steps; ++t) d.point_begin[t + 1] += d.point_begin[t];
  }

  d.comp_begin.assign(steps + 1, 0);
  if (isd != nullptr) {
    const auto& comps = isd->components;
    std::vector<std::size_t> order(comps.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return comps[a].t < comps[b].t; });
    for (std::size_t i : order) {
      const ISComponent& c = comps[i];
      d.comp_lambda.insert(d.comp_lambda.end(), c.shift.lambda.data(), c.shift.lambda.data() + d.k);
      d.comp_half_quad.push_back(c.half_quad);
      d.comp_log_weight.push_back(std::log(c.weight));
      d.comp_slot.push_back(i);
      d.comp_begin[static_cast<std::size_t>(c.t) + 1]++;
      d.last_comp_t = std::max(d.last_comp_t, c.t);
    }
    for (std::size_t t = 0; t < steps; ++t) d.comp_begin[t + 1] += d.comp_begin[t];
    for (const ISComponent& c : comps) {
      d.shift_offset.push_back(d.shifts.size());
      for (const VectorXd& s : c.shift.shifts) d.shifts.insert(d.shifts.end(), s.data(), s.data() + d.n);
    }
  }
  return d;
}

// Tracks the collision indicator along the rollout polyline.
struct PolylineTracker {
  const KernelData& d;
  double prev[kMaxCombinedDim];
  bool hit = false;

  void step(int t, const double* z) {
    const double* nom = d.nominal_pos.data() + static_cast<std::ptrdiff_t>(t) * d.k;
    double pos[kMaxCombinedDim];
    for (int i = 0; i < d.k; ++i) pos[i] = nom[i] + z[i];
    if (!hit && !d.obstacles.empty()) hit = t == 0 ? d.obstacles.point_hits(pos) : d.obstacles.segment_hits(prev, pos);
    for (int i = 0; i < d.k; ++i) prev[i] = pos[i];
  }
};

std::int64_t simple_hits(const PathProblem& problem, const KernelData& d, std::int64_t first, std::int64_t count,
                         std::uint64_t seed) {
  if (d.obstacles.empty() || count <= 0) return 0;
  const RolloutEngine engine(problem.law);
  const auto chunks = static_cast<std::size_t>((count + kChunk - 1) / kChunk);
  std::vector<std::int64_t> hits(chunks, 0);
  parallel_for_chunks(chunks, [&](std::size_t c) {
    const std::int64_t lo = first + static_cast<std::int64_t>(c) * kChunk;
    const std::int64_t hi = std::min(first + count, lo + kChunk);
    std::int64_t local = 0;
    for (std::int64_t i = lo; i < hi; ++i) {
      PolylineTracker track{d, {}, false};
      engine.run(ParticleStream(seed, static_cast<std::uint64_t>(i)), nullptr, 0, nullptr, [&](int t, const double* z) {
        track.step(t, z);
        return !track.hit;
      });
      local += track.hit ? 1 : 0;
    }
    hits[c] = local;
  });
  std::int64_t total = 0;
  for (std::int64_t h : hits) total += h;
  return total;
}

CPEstimate simple_from_counts(std::int64_t hits, std::int64_t m) {
  CPEstimate e;
  e.method = EstimatorMethod::simple;
  e.m = m;
  if (m <= 0) return e;
  const double p = static_cast<double>(hits) / static_cast<double>(m);
  e.p_hat = e.p_raw = p;
  if (m > 1) {
    const double sample_var = p * (1.0 - p) * static_cast<double>(m) / static_cast<double>(m - 1);
    e.var_hat = sample_var / static_cast<double>(m);
  }
  e.std_err = std::sqrt(e.var_hat);
  return e;
}

void append(VRSamples& into, const VRSamples& more) {
  into.fL.insert(into.fL.end(), more.fL.begin(), more.fL.end());
  into.hL.insert(into.hL.end(), more.hL.begin(), more.hL.end());
  into.L.insert(into.L.end(), more.L.begin(), more.L.end());
  into.f.insert(into.f.end(), more.f.begin(), more.f.end());
  into.h.insert(into.h.end(), more.h.begin(), more.h.end());
}

}  // namespace

std::string_view to_string(EstimatorMethod m) { return m == EstimatorMethod::simple ? "simple" : "vr"; }

std::string_view to_string(Decision d) {
  switch (d) {
    case Decision::above:
      return "above";
    case Decision::below:
      return "below";
    default:
      return "inconclusive";
  }
}

PathProblem PathProblem::build(NominalTrajectory nominal, const DiscreteLQGSystem& sys, const TrackingCost& cost,
                               const MatrixXd& P0, Workspace workspace) {
  nominal.validate(sys);
  PathProblem p;
  p.law = synthesize(sys, cost, nominal.horizon(), P0);
  p.moments = propagate_moments(p.law);
  p.nominal = std::move(nominal);
  p.workspace = std::move(workspace);
  return p;
}

ShiftSolution solve_shift(const TrackingLaw& law, int t, const VectorXd& target) {
  if (t < 0 || t > law.horizon) throw std::invalid_argument("solve_shift: step outside the horizon");
  const int n = law.combined_dim();
  const auto k = static_cast<int>(target.size());
  if (k < 1 || k > law.state_dim) throw std::invalid_argument("solve_shift: target dimension");
  // psi[j] = (Phi(t, j))^T E^T, the sensitivity of the target rows to injection j.
  std::vector<MatrixXd> psi(static_cast<std::size_t>(t) + 1);
  psi[static_cast<std::size_t>(t)] = MatrixXd::Identity(n, k);
  for (int j = t - 1; j >= 0; --j) {
    psi[static_cast<std::size_t>(j)] = law.M[static_cast<std::size_t>(j)].transpose() * psi[static_cast<std::size_t>(j) + 1];
  }
  MatrixXd G = MatrixXd::Zero(k, k);
  for (int j = 0; j <= t; ++j) {
    const MatrixXd& psi_j = psi[static_cast<std::size_t>(j)];
    G.noalias() += psi_j.transpose() * law.injection_covariance(j) * psi_j;
  }
  G = 0.5 * (G + G.transpose());
  const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(G);
  const double top = eig.eigenvalues().maxCoeff();
  if (!(top > 0.0) || eig.eigenvalues().minCoeff() <= 1e-12 * top) {
    throw NumericalError("solve_shift: weighted Gramian is singular; target direction is unreachable");
  }
  ShiftSolution out;
  out.gramian = G;
  out.lambda = G.ldlt().solve(target);
  out.shifts.reserve(static_cast<std::size_t>(t) + 1);
  for (int j = 0; j <= t; ++j) {
    out.shifts.push_back(law.injection_covariance(j) * (psi[static_cast<std::size_t>(j)] * out.lambda));
  }
  return out;
}

std::size_t ISDistribution::select(double u) const {
  const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), u);
  if (it == cumulative.end()) return cumulative.size() - 1;
  return static_cast<std::size_t>(it - cumulative.begin());
}

ISDistribution build_is_distribution(const CloseSet& close, const TrackingLaw& law, const MomentSchedule& moments) {
  ISDistribution isd;
  double total = 0.0;
  for (const ClosePoint& p : close.points) {
    if (p.in_mixture) total += p.hit_prob;
  }
  if (!(total > 0.0)) throw std::invalid_argument("build_is_distribution: empty close set");
  for (std::size_t i = 0; i < close.points.size(); ++i) {
    const ClosePoint& p = close.points[i];
    if (!p.in_mixture) continue;
    const auto k = static_cast<int>(p.normal.size());
    // Mean of the component sits on the tangent point: target = z - x_nom.
    const VectorXd target = p.mdist * (moments.state_block(p.t, k) * p.normal);
    ISComponent c;
    c.point = i;
    c.t = p.t;
    c.weight = p.hit_prob / total;
    c.shift = solve_shift(law, p.t, target);
    c.half_quad = 0.5 * c.shift.lambda.dot(c.shift.gramian * c.shift.lambda);
    isd.components.push_back(std::move(c));
  }
  double run = 0.0;
  for (const ISComponent& c : isd.components) {
    run += c.weight;
    isd.cumulative.push_back(run);
  }
  isd.cumulative.back() = 1.0;
  return isd;
}

bool collision_indicator(const Rollout& rollout, const Workspace& ws) {
  const ObstacleIndex index(ws.obstacles, ws.inflation);
  if (index.empty() || rollout.states.empty()) return false;
  if (index.point_hits(rollout.states.front().data())) return true;
  for (std::size_t t = 1; t < rollout.states.size(); ++t) {
    if (index.segment_hits(rollout.states[t - 1].data(), rollout.states[t].data())) return true;
  }
  return false;
}

int control_variate_value(const Rollout& rollout, const NominalTrajectory& nominal, const CloseSet& close) {
  int h = 0;
  for (const ClosePoint& p : close.points) {
    const auto t = static_cast<std::size_t>(p.t);
    const VectorXd dx = rollout.states[t] - nominal.waypoints[t];
    if (p.crossed(dx.data())) ++h;
  }
  return h;
}

double likelihood_ratio(const Rollout& rollout, const ISDistribution& isd, const TrackingLaw& law) {
  std::vector<double> terms;
  terms.reserve(isd.components.size());
  for (const ISComponent& c : isd.components) {
    double ell = 0.0;
    for (int j = 0; j <= c.t; ++j) {
      const VectorXd& mu = c.shift.shifts[static_cast<std::size_t>(j)];
      const VectorXd a = law.injection[static_cast<std::size_t>(j)].pinv * mu;
      ell += a.dot(rollout.noise[static_cast<std::size_t>(j)]) - 0.5 * a.dot(mu);
    }
    terms.push_back(std::log(c.weight) + ell);
  }
  const double top = *std::max_element(terms.begin(), terms.end());
  if (!std::isfinite(top)) return 0.0;
  double sum = 0.0;
  for (double v : terms) sum += std::exp(v - top);
  return std::exp(-(top + std::log(sum)));
}

Rollout sample_mixture_rollout(const PathProblem& problem, const ISDistribution& isd, std::uint64_t seed,
                               std::uint64_t particle, std::size_t* component) {
  const ParticleStream stream(seed, particle);
  const std::size_t c = isd.select(stream.uniforms(ParticleStream::kSelectorStep, 0)[0]);
  if (component != nullptr) *component = c;
  return simulate_rollout(problem.nominal, problem.law, &isd.components[c].shift.shifts, seed, particle);
}

CPEstimate simple_mc(const PathProblem& problem, std::int64_t m, std::uint64_t seed) {
  if (m < 1) throw std::invalid_argument("simple_mc: m must be at least 1");
  const KernelData d = make_kernel(problem, nullptr, nullptr);
  return simple_from_counts(simple_hits(problem, d, 0, m, seed), m);
}

VRSamples sample_vr(const PathProblem& problem, const CloseSet& close, const ISDistribution& isd,
                    std::int64_t first_particle, std::int64_t count, std::uint64_t seed) {
  const KernelData d = make_kernel(problem, &close, &isd);
  const RolloutEngine engine(problem.law);
  VRSamples out;
  out.theta = close.theta;
  const auto total = static_cast<std::size_t>(std::max<std::int64_t>(count, 0));
  out.fL.resize(total);
  out.hL.resize(total);
  out.L.resize(total);
  out.f.resize(total);
  out.h.resize(total);
  const int last_needed = std::max(d.last_point_t, d.last_comp_t);
  const std::size_t ncomp = d.comp_slot.size();
  const auto chunks = static_cast<std::size_t>((count + kChunk - 1) / kChunk);
  parallel_for_chunks(chunks, [&](std::size_t chunk) {
    std::vector<double> log_terms(ncomp);
    const std::int64_t lo = static_cast<std::int64_t>(chunk) * kChunk;
    const std::int64_t hi = std::min(count, lo + kChunk);
    for (std::int64_t i = lo; i < hi; ++i) {
      const ParticleStream stream(seed, static_cast<std::uint64_t>(first_particle + i));
      const std::size_t c = isd.select(stream.uniforms(ParticleStream::kSelectorStep, 0)[0]);
      const double* shift = d.shifts.data() + d.shift_offset[c];
      const int shift_len = isd.components[c].t + 1;
      PolylineTracker track{d, {}, false};
      int h = 0;
      engine.run(stream, shift, shift_len, nullptr, [&](int t, const double* z) {
        track.step(t, z);
        const auto ts = static_cast<std::size_t>(t);
        for (std::size_t p = d.point_begin[ts]; p < d.point_begin[ts + 1]; ++p) {
          const double* a = d.point_normal.data() + p * static_cast<std::size_t>(d.k);
          double s = 0.0;
          for (int r = 0; r < d.k; ++r) s += a[r] * z[r];
          if (s >= d.point_mdist[p]) ++h;
        }
        for (std::size_t q = d.comp_begin[ts]; q < d.comp_begin[ts + 1]; ++q) {
          // log Q_q/P = lambda^T dp_t - 0.5 lambda^T G lambda for a minimum-energy shift.
          const double* lam = d.comp_lambda.data() + q * static_cast<std::size_t>(d.k);
          double s = 0.0;
          for (int r = 0; r < d.k; ++r) s += lam[r] * z[r];
          log_terms[q] = d.comp_log_weight[q] + s - d.comp_half_quad[q];
        }
        return !(track.hit && t >= last_needed);
      });
      double top = -std::numeric_limits<double>::infinity();
      for (double v : log_terms) top = std::max(top, v);
      double sum = 0.0;
      for (double v : log_terms) sum += std::exp(v - top);
      const double L = std::isfinite(top) ? std::exp(-(top + std::log(sum))) : 0.0;
      const auto idx = static_cast<std::size_t>(i);
      out.f[idx] = track.hit ? 1 : 0;
      out.h[idx] = h;
      out.L[idx] = L;
      out.fL[idx] = track.hit ? L : 0.0;
      out.hL[idx] = h * L;
    }
  });
  return out;
}

CPEstimate vr_estimate_from_samples(const VRSamples& s) {
  CPEstimate e;
  e.method = EstimatorMethod::vr;
  e.theta = s.theta;
  const std::size_t m = s.fL.size();
  e.m = static_cast<std::int64_t>(m);
  if (m == 0) return e;
  const double md = static_cast<double>(m);
  double sy = 0.0, sh = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sy += s.fL[i];
    sh += s.hL[i];
  }
  const double p_q = sy / md;
  const double theta_q = sh / md;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double dh = s.hL[i] - theta_q;
    sxy += (s.fL[i] - p_q) * dh;
    sxx += dh * dh;
  }
  const double beta = sxx > 0.0 ? sxy / sxx : 0.0;
  const double p = p_q - beta * (theta_q - s.theta);
  double ss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double r = s.fL[i] - p - beta * (s.hL[i] - s.theta);
    ss += r * r;
  }
  e.beta = beta;
  e.theta_hat = theta_q;
  e.p_raw = p;
  e.p_hat = std::clamp(p, 0.0, 1.0);
  e.var_hat = ss / (md * md);
  e.std_err = std::sqrt(e.var_hat);
  return e;
}

CPEstimate estimate_cp_vr(const PathProblem& problem, std::int64_t m, std::uint64_t seed,
                          const CloseSetOptions& options) {
  if (m < 2) throw std::invalid_argument("estimate_cp_vr: m must be at least 2");
  CloseSetOptions opts = options;
  opts.planned_particles = static_cast<double>(m);
  const CloseSet close = build_close_set(problem.nominal, problem.moments, problem.workspace, opts);
  if (close.mixture_size() == 0) return simple_mc(problem, m, seed);
  const ISDistribution isd = build_is_distribution(close, problem.law, problem.moments);
  return vr_estimate_from_samples(sample_vr(problem, close, isd, 0, m, seed));
}

AdaptiveResult estimate_cp_adaptive(const PathProblem& problem, const AdaptiveOptions& options, std::uint64_t seed) {
  if (options.batch < 100) throw std::invalid_argument("estimate_cp_adaptive: batch must be at least 100");
  if (options.max_m < options.batch) throw std::invalid_argument("estimate_cp_adaptive: max_m below batch");
  CloseSetOptions copts;
  copts.planned_particles = static_cast<double>(options.max_m);
  const CloseSet close = build_close_set(problem.nominal, problem.moments, problem.workspace, copts);
  const bool use_vr = close.mixture_size() > 0;
  const KernelData simple_data = make_kernel(problem, nullptr, nullptr);
  ISDistribution isd;
  if (use_vr) isd = build_is_distribution(close, problem.law, problem.moments);

  AdaptiveResult result;
  VRSamples pooled;
  pooled.theta = close.theta;
  std::int64_t hits = 0;
  std::int64_t used = 0;
  while (used < options.max_m) {
    const std::int64_t count = std::min(options.batch, options.max_m - used);
    if (use_vr) {
      append(pooled, sample_vr(problem, close, isd, used, count, seed));
    } else {
      hits += simple_hits(problem, simple_data, used, count, seed);
    }
    used += count;
    result.estimate = use_vr ? vr_estimate_from_samples(pooled) : simple_from_counts(hits, used);
    const double gap = result.estimate.p_hat - options.alpha;
    const double band = options.confidence_z * result.estimate.std_err;
    if (std::abs(gap) > band) break;
    if (options.rel_tol > 0.0 && used >= 2 * options.batch &&
        result.estimate.std_err <= options.rel_tol * options.alpha) {
      break;
    }
  }
  const double gap = result.estimate.p_hat - options.alpha;
  const double band = options.confidence_z * result.estimate.std_err;
  result.decision = gap > band ? Decision::above : (-gap > band ? Decision::below : Decision::inconclusive);
  return result;
}

}  // namespace mcmp
