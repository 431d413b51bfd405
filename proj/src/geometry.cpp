#include "mcmp/geometry.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <numeric>

namespace mcmp {

namespace {

constexpr double kFeasTol = 1e-9;

// Calls fn(indices) for every k-subset of {0..n-1}.
void for_each_subset(int n, int k, const std::function<void(const std::vector<int>&)>& fn) {
  if (k > n || k <= 0) return;
  std::vector<int> idx(static_cast<std::size_t>(k));
  std::iota(idx.begin(), idx.end(), 0);
  while (true) {
    fn(idx);
    int i = k - 1;
    while (i >= 0 && idx[static_cast<std::size_t>(i)] == n - k + i) --i;
    if (i < 0) return;
    ++idx[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
  }
}

MatrixXd normal_matrix(const std::vector<Halfspace>& faces) {
  const auto k = faces.front().normal.size();
  MatrixXd a(static_cast<Eigen::Index>(faces.size()), k);
  for (std::size_t i = 0; i < faces.size(); ++i) a.row(static_cast<Eigen::Index>(i)) = faces[i].normal.transpose();
  return a;
}

std::vector<VectorXd> enumerate_vertices(const std::vector<Halfspace>& faces, double inflation) {
  std::vector<VectorXd> out;
  if (faces.empty()) return out;
  const int k = static_cast<int>(faces.front().normal.size());
  const int n = static_cast<int>(faces.size());
  for_each_subset(n, k, [&](const std::vector<int>& s) {
    MatrixXd a(k, k);
    VectorXd b(k);
    for (int i = 0; i < k; ++i) {
      a.row(i) = faces[static_cast<std::size_t>(s[static_cast<std::size_t>(i)])].normal.transpose();
      b(i) = faces[static_cast<std::size_t>(s[static_cast<std::size_t>(i)])].offset + inflation;
    }
    Eigen::FullPivLU<MatrixXd> lu(a);
    if (lu.rank() < k) return;
    const VectorXd v = lu.solve(b);
    const double scale = 1.0 + v.cwiseAbs().maxCoeff();
    for (const Halfspace& h : faces) {
      if (h.normal.dot(v) > h.offset + inflation + kFeasTol * scale) return;
    }
    for (const VectorXd& w : out) {
      if ((w - v).cwiseAbs().maxCoeff() <= 1e-9 * scale) return;
    }
    out.push_back(v);
  });
  return out;
}

bool recession_cone_trivial(const std::vector<Halfspace>& faces) {
  const MatrixXd a = normal_matrix(faces);
  const int k = static_cast<int>(a.cols());
  if (Eigen::FullPivLU<MatrixXd>(a).rank() < k) return false;
  if (k == 1) {
    bool pos = false, neg = false;
    for (int i = 0; i < a.rows(); ++i) {
      pos = pos || a(i, 0) > 0.0;
      neg = neg || a(i, 0) < 0.0;
    }
    return pos && neg;
  }
  bool trivial = true;
  for_each_subset(static_cast<int>(a.rows()), k - 1, [&](const std::vector<int>& s) {
    if (!trivial) return;
    MatrixXd sub(k - 1, k);
    for (int i = 0; i < k - 1; ++i) sub.row(i) = a.row(s[static_cast<std::size_t>(i)]);
    Eigen::FullPivLU<MatrixXd> lu(sub);
    if (lu.rank() < k - 1) return;
    const MatrixXd ker = lu.kernel();
    if (ker.cols() != 1) return;
    for (double sign : {1.0, -1.0}) {
      const VectorXd ray = sign * ker.col(0).normalized();
      if (((a * ray).array() <= 1e-12).all()) trivial = false;
    }
  });
  return trivial;
}

}  // namespace

ConvexObstacle::ConvexObstacle(std::vector<Halfspace> faces) : faces_(std::move(faces)) {
  if (faces_.empty()) throw std::invalid_argument("obstacle needs at least one half-space");
  const auto k = faces_.front().normal.size();
  if (k < 1) throw std::invalid_argument("obstacle half-space normal is empty");
  for (Halfspace& h : faces_) {
    if (h.normal.size() != k) throw std::invalid_argument("obstacle half-space normals differ in dimension");
    if (!h.normal.allFinite() || !std::isfinite(h.offset)) {
      throw std::invalid_argument("obstacle half-space has non-finite entries");
    }
    const double len = h.normal.norm();
    if (!(len > 0.0)) throw std::invalid_argument("obstacle half-space normal is zero");
    h.normal /= len;
    h.offset /= len;
  }
  if (!recession_cone_trivial(faces_)) throw std::invalid_argument("obstacle region is unbounded");
  if (enumerate_vertices(faces_, 0.0).empty()) throw std::invalid_argument("obstacle region is empty");
}

ConvexObstacle ConvexObstacle::box(const VectorXd& lower, const VectorXd& upper) {
  const auto k = lower.size();
  if (upper.size() != k) throw std::invalid_argument("box corners differ in dimension");
  std::vector<Halfspace> faces;
  for (Eigen::Index i = 0; i < k; ++i) {
    if (!(lower(i) < upper(i))) throw std::invalid_argument("box lower corner must be below upper corner");
    VectorXd e = VectorXd::Zero(k);
    e(i) = 1.0;
    faces.push_back({e, upper(i)});
    faces.push_back({-e, -lower(i)});
  }
  return ConvexObstacle(std::move(faces));
}

ConvexObstacle ConvexObstacle::from_vertices(const std::vector<VectorXd>& vertices) {
  if (vertices.empty()) throw std::invalid_argument("vertex list is empty");
  const int k = static_cast<int>(vertices.front().size());
  if (k < 2 || k > 3) throw std::invalid_argument("vertex lists are supported in 2-D and 3-D");
  for (const VectorXd& v : vertices) {
    if (v.size() != k || !v.allFinite()) throw std::invalid_argument("vertex list has inconsistent or non-finite entries");
  }
  double scale = 1.0;
  for (const VectorXd& v : vertices) scale = std::max(scale, v.cwiseAbs().maxCoeff());
  const double tol = 1e-9 * scale;
  std::vector<Halfspace> faces;
  for_each_subset(static_cast<int>(vertices.size()), k, [&](const std::vector<int>& s) {
    const VectorXd& p0 = vertices[static_cast<std::size_t>(s[0])];
    MatrixXd span(k - 1, k);
    for (int i = 1; i < k; ++i) span.row(i - 1) = (vertices[static_cast<std::size_t>(s[static_cast<std::size_t>(i)])] - p0).transpose();
    Eigen::FullPivLU<MatrixXd> lu(span);
    if (lu.rank() < k - 1) return;
    const MatrixXd ker = lu.kernel();
    if (ker.cols() != 1) return;
    VectorXd n = ker.col(0).normalized();
    double lo = 0.0, hi = 0.0;
    for (const VectorXd& v : vertices) {
      const double r = n.dot(v - p0);
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    if (hi > tol && lo < -tol) return;
    if (hi > tol) n = -n;
    const double off = n.dot(p0);
    for (const Halfspace& f : faces) {
      if ((f.normal - n).cwiseAbs().maxCoeff() < 1e-9 && std::abs(f.offset - off) < tol) return;
    }
    faces.push_back({n, off});
  });
  if (static_cast<int>(faces.size()) < k + 1) throw std::invalid_argument("vertex list does not span a full-dimensional hull");
  return ConvexObstacle(std::move(faces));
}

bool ConvexObstacle::contains(const VectorXd& x, double inflation) const {
  for (const Halfspace& h : faces_) {
    if (h.normal.dot(x.head(h.normal.size())) > h.offset + inflation) return false;
  }
  return !faces_.empty();
}

std::vector<VectorXd> ConvexObstacle::vertices(double inflation) const { return enumerate_vertices(faces_, inflation); }

VectorXd ConvexObstacle::centroid() const {
  const auto vs = vertices();
  VectorXd c = VectorXd::Zero(dim());
  for (const VectorXd& v : vs) c += v;
  return c / static_cast<double>(vs.size());
}

bool GoalRegion::contains(const VectorXd& position) const {
  if (shape == Shape::box) {
    const auto k = lower.size();
    return (position.head(k).array() >= lower.array()).all() && (position.head(k).array() <= upper.array()).all();
  }
  return (position.head(center.size()) - center).norm() <= radius;
}

VectorXd GoalRegion::sample(const std::function<double()>& uniform) const {
  if (shape == Shape::box) {
    VectorXd out(lower.size());
    for (Eigen::Index i = 0; i < lower.size(); ++i) out(i) = lower(i) + uniform() * (upper(i) - lower(i));
    return out;
  }
  const auto k = center.size();
  VectorXd offset(k);
  while (true) {
    for (Eigen::Index i = 0; i < k; ++i) offset(i) = 2.0 * uniform() - 1.0;
    if (offset.squaredNorm() <= 1.0) return center + radius * offset;
  }
}

Workspace inflate(const Workspace& ws, double s) {
  if (!(s >= 0.0)) throw std::invalid_argument("inflate: amount must be nonnegative");
  Workspace out = ws;
  out.inflation = ws.inflation + s;
  return out;
}

ObstacleIndex::ObstacleIndex(const std::vector<ConvexObstacle>& obstacles, double inflation) {
  for (const ConvexObstacle& o : obstacles) {
    if (dim_ == 0) dim_ = o.dim();
    if (o.dim() != dim_) throw std::invalid_argument("obstacles differ in dimension");
    spans_.push_back({offsets_.size(), o.faces().size()});
    for (const Halfspace& h : o.faces()) {
      normals_.insert(normals_.end(), h.normal.data(), h.normal.data() + dim_);
      offsets_.push_back(h.offset + inflation);
    }
    const auto vs = o.vertices(inflation);
    VectorXd lo = vs.front(), hi = vs.front();
    for (const VectorXd& v : vs) {
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
    for (int i = 0; i < dim_; ++i) {
      const double pad = 1e-9 * (1.0 + std::abs(lo(i)) + std::abs(hi(i)));
      box_lo_.push_back(lo(i) - pad);
      box_hi_.push_back(hi(i) + pad);
    }
  }
}

bool ObstacleIndex::point_hits(const double* x) const {
  for (std::size_t o = 0; o < spans_.size(); ++o) {
    const Span& sp = spans_[o];
    bool inside = true;
    for (std::size_t f = sp.first_face; f < sp.first_face + sp.face_count && inside; ++f) {
      const double* a = normals_.data() + f * static_cast<std::size_t>(dim_);
      double s = 0.0;
      for (int i = 0; i < dim_; ++i) s += a[i] * x[i];
      inside = s <= offsets_[f];
    }
    if (inside) return true;
  }
  return false;
}

bool ObstacleIndex::segment_hits(const double* p, const double* q) const {
  const auto k = static_cast<std::size_t>(dim_);
  for (std::size_t o = 0; o < spans_.size(); ++o) {
    bool outside_box = false;
    for (std::size_t i = 0; i < k && !outside_box; ++i) {
      const double lo = box_lo_[o * k + i], hi = box_hi_[o * k + i];
      outside_box = (p[i] < lo && q[i] < lo) || (p[i] > hi && q[i] > hi);
    }
    if (outside_box) continue;
    const Span& sp = spans_[o];
    double t_lo = 0.0, t_hi = 1.0;
    bool hit = true;
    for (std::size_t f = sp.first_face; f < sp.first_face + sp.face_count; ++f) {
      const double* a = normals_.data() + f * k;
      double ap = 0.0, ad = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        ap += a[i] * p[i];
        ad += a[i] * (q[i] - p[i]);
      }
      const double slack = offsets_[f] - ap;  // need ad * t <= slack
      if (ad == 0.0) {
        if (slack < 0.0) {
          hit = false;
          break;
        }
      } else if (ad > 0.0) {
        t_hi = std::min(t_hi, slack / ad);
      } else {
        t_lo = std::max(t_lo, slack / ad);
      }
      if (t_lo > t_hi) {
        hit = false;
        break;
      }
    }
    if (hit) return true;
  }
  return false;
}

bool point_in_collision(const VectorXd& x, const Workspace& ws) {
  for (const ConvexObstacle& o : ws.obstacles) {
    if (o.contains(x.head(ws.dim()), ws.inflation)) return true;
  }
  return false;
}

bool segment_in_collision(const VectorXd& p, const VectorXd& q, const Workspace& ws, double resolution) {
  if (!(resolution > 0.0)) throw std::invalid_argument("segment_in_collision: resolution must be positive");
  if (ws.obstacles.empty()) return false;
  const ObstacleIndex index(ws.obstacles, ws.inflation);
  const VectorXd a = p.head(ws.dim()), b = q.head(ws.dim());
  return index.segment_hits(a.data(), b.data());
}

namespace {

struct Whitening {
  Eigen::LLT<MatrixXd> llt;
  MatrixXd lower;
};

Whitening whiten(const MatrixXd& sigma) {
  const auto k = sigma.rows();
  MatrixXd s = 0.5 * (sigma + sigma.transpose());
  Eigen::LLT<MatrixXd> llt(s);
  bool ok = llt.info() == Eigen::Success;
  if (ok) {
    const VectorXd diag = MatrixXd(llt.matrixL()).diagonal();
    ok = diag.minCoeff() > 1e-12 * std::max(1e-300, diag.maxCoeff());
  }
  if (!ok) {
    const double eps = 1e-9 * std::max(s.trace(), 0.0) / static_cast<double>(k);
    if (!(eps > 0.0)) throw NumericalError("mahalanobis_closest_point: covariance is zero");
    s += eps * MatrixXd::Identity(k, k);
    llt.compute(s);
    if (llt.info() != Eigen::Success) throw NumericalError("mahalanobis_closest_point: covariance is not PSD");
  }
  return {llt, MatrixXd(llt.matrixL())};
}

MahalanobisProjection project_whitened(const ConvexObstacle& obstacle, const VectorXd& x, const Whitening& w,
                                       double inflation) {
  const auto& faces = obstacle.faces();
  const auto m = static_cast<Eigen::Index>(faces.size());
  const auto k = x.size();
  MatrixXd g(m, k);
  VectorXd h(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Halfspace& f = faces[static_cast<std::size_t>(i)];
    g.row(i) = f.normal.transpose() * w.lower;
    h(i) = f.offset + inflation - f.normal.dot(x);
  }
  MahalanobisProjection out;
  if ((h.array() >= 0.0).all()) {
    out.z = x;
    out.mdist = 0.0;
    return out;
  }

  constexpr int kMaxSweeps = 500;
  constexpr double kTol = 1e-10;
  const VectorXd gnorm2 = g.rowwise().squaredNorm();
  const double scale = 1.0 + h.cwiseAbs().maxCoeff();
  VectorXd lambda = VectorXd::Zero(m);
  VectorXd y = VectorXd::Zero(k);
  bool converged = false;
  int sweep = 0;
  for (; sweep < kMaxSweeps && !converged; ++sweep) {
    double change = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double next = std::max(0.0, lambda(i) + (g.row(i).dot(y) - h(i)) / gnorm2(i));
      const double delta = next - lambda(i);
      if (delta != 0.0) {
        y -= g.row(i).transpose() * delta;
        lambda(i) = next;
        change = std::max(change, std::abs(delta) * std::sqrt(gnorm2(i)));
      }
    }
    converged = change <= kTol * scale;
  }
  out.iterations = sweep;

  // Exact solve on the active set found by the dual iteration.
  std::vector<Eigen::Index> active;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (lambda(i) > 0.0) active.push_back(i);
  }
  if (!active.empty() && static_cast<Eigen::Index>(active.size()) <= k) {
    MatrixXd ga(static_cast<Eigen::Index>(active.size()), k);
    VectorXd ha(static_cast<Eigen::Index>(active.size()));
    for (std::size_t r = 0; r < active.size(); ++r) {
      ga.row(static_cast<Eigen::Index>(r)) = g.row(active[r]);
      ha(static_cast<Eigen::Index>(r)) = h(active[r]);
    }
    Eigen::FullPivLU<MatrixXd> lu(ga * ga.transpose());
    if (lu.isInvertible()) {
      const VectorXd mu = -lu.solve(ha);
      const VectorXd ys = -ga.transpose() * mu;
      if ((mu.array() >= -1e-12 * scale).all() && ((g * ys - h).array() <= 1e-10 * scale).all()) {
        y = ys;
        converged = true;
      }
    }
  }
  if (!converged) {
    const double violation = (g * y - h).maxCoeff();
    if (violation > 1e-6 * scale) {
      throw NumericalError("mahalanobis_closest_point: projection did not converge (ill-conditioned covariance)");
    }
  }
  out.z = x + w.lower * y;
  out.mdist = y.norm();
  return out;
}

}  // namespace

MahalanobisProjection mahalanobis_closest_point(const ConvexObstacle& obstacle, const VectorXd& x,
                                                const MatrixXd& sigma, double inflation) {
  if (x.size() != obstacle.dim() || sigma.rows() != x.size() || sigma.cols() != x.size()) {
    throw std::invalid_argument("mahalanobis_closest_point: dimension mismatch");
  }
  return project_whitened(obstacle, x, whiten(sigma), inflation);
}

std::size_t CloseSet::mixture_size() const {
  return static_cast<std::size_t>(std::count_if(points.begin(), points.end(), [](const ClosePoint& p) { return p.in_mixture; }));
}

CloseSet build_close_set(const NominalTrajectory& nominal, const MomentSchedule& moments, const Workspace& ws,
                         const CloseSetOptions& options) {
  const int k = ws.dim();
  if (moments.sigma.size() < nominal.waypoints.size()) {
    throw std::invalid_argument("build_close_set: moments do not cover every waypoint");
  }
  CloseSet out;
  for (std::size_t t = 0; t < nominal.waypoints.size(); ++t) {
    const MatrixXd sigma = moments.state_block(static_cast<int>(t), k);
    if (!(sigma.trace() > 0.0)) continue;
    const Whitening w = whiten(sigma);
    const VectorXd x = nominal.waypoints[t].head(k);
    std::vector<ClosePoint> candidates;
    for (std::size_t i = 0; i < ws.obstacles.size(); ++i) {
      const ConvexObstacle& obs = ws.obstacles[i];
      const MahalanobisProjection proj = project_whitened(obs, x, w, ws.inflation);
      if (proj.mdist > options.mdist_cutoff) continue;
      ClosePoint cp;
      cp.t = static_cast<int>(t);
      cp.obstacle_id = static_cast<int>(i);
      cp.z = proj.z;
      cp.mdist = proj.mdist;
      if (proj.mdist > 0.0) {
        cp.normal = w.llt.solve(proj.z - x) / proj.mdist;
      } else {
        // Nominal waypoint inside the obstacle: any half-plane through x has
        // probability one half; use the shallowest face.
        std::size_t best = 0;
        double best_slack = -std::numeric_limits<double>::infinity();
        for (std::size_t f = 0; f < obs.faces().size(); ++f) {
          const double slack = obs.faces()[f].normal.dot(x) - obs.faces()[f].offset - ws.inflation;
          if (slack > best_slack) {
            best_slack = slack;
            best = f;
          }
        }
        const VectorXd& a = obs.faces()[best].normal;
        cp.normal = -a / std::sqrt(a.dot(sigma * a));
      }
      cp.hit_prob = standard_normal_cdf(-proj.mdist);
      candidates.push_back(std::move(cp));
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const ClosePoint& a, const ClosePoint& b) { return a.mdist < b.mdist; });
    std::vector<ClosePoint> kept;
    for (ClosePoint& c : candidates) {
      const bool occluded = std::any_of(kept.begin(), kept.end(), [&](const ClosePoint& r) {
        return r.normal.dot(c.z - r.z) > 1e-9 * std::max(1.0, r.mdist);
      });
      if (!occluded) kept.push_back(std::move(c));
    }
    for (ClosePoint& c : kept) out.points.push_back(std::move(c));
  }
  for (const ClosePoint& p : out.points) out.theta += p.hit_prob;
  if (!out.points.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 0; i < out.points.size(); ++i) {
      ClosePoint& p = out.points[i];
      p.in_mixture = p.hit_prob / out.theta * options.planned_particles >= options.prune_threshold;
      if (p.hit_prob > out.points[best].hit_prob) best = i;
    }
    out.points[best].in_mixture = true;
  }
  return out;
}

}  // namespace mcmp
