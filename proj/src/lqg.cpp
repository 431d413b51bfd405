#include "mcmp/lqg.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <numbers>
#include <sstream>

namespace mcmp {

namespace {

bool all_finite(const MatrixXd& m) { return m.allFinite(); }

bool symmetric(const MatrixXd& m, double tol = 1e-9) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

bool psd(const MatrixXd& m, double tol = 1e-10) {
  if (!symmetric(m)) return false;
  if (m.size() == 0) return true;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  return es.eigenvalues().minCoeff() >= -tol * scale;
}

bool pd(const MatrixXd& m) {
  if (!symmetric(m) || m.size() == 0) return false;
  Eigen::LLT<MatrixXd> llt(0.5 * (m + m.transpose()));
  return llt.info() == Eigen::Success;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

MatrixXd symmetrized(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

void ContinuousLinearSystem::validate() const {
  const int d = state_dim();
  require(d > 0 && A.cols() == d, "A_c must be square and non-empty");
  require(B.rows() == d && B.cols() > 0, "B_c must have one row per state");
  require(C.cols() == d && C.rows() > 0, "C_c must have one column per state");
  require(V.rows() == d && V.cols() == d, "V_c must be state_dim x state_dim");
  require(W.rows() == C.rows() && W.cols() == C.rows(), "W_c must be output_dim x output_dim");
  require(all_finite(A) && all_finite(B) && all_finite(C) && all_finite(V) && all_finite(W),
          "continuous system contains non-finite entries");
  require(psd(V), "V_c must be symmetric positive semidefinite");
  require(pd(W), "W_c must be symmetric positive definite");
}

void TrackingCost::validate(int state_dim, int input_dim) const {
  require(Q.rows() == state_dim && Q.cols() == state_dim, "Q must be state_dim x state_dim");
  require(F.rows() == state_dim && F.cols() == state_dim, "F must be state_dim x state_dim");
  require(R.rows() == input_dim && R.cols() == input_dim, "R must be input_dim x input_dim");
  require(all_finite(Q) && all_finite(R) && all_finite(F), "cost contains non-finite entries");
  require(psd(Q), "Q must be positive semidefinite");
  require(psd(F), "F must be positive semidefinite");
  require(pd(R), "R must be positive definite");
}

GaussianFactor GaussianFactor::from_covariance(const MatrixXd& cov) {
  const auto n = cov.rows();
  GaussianFactor g;
  g.root = MatrixXd::Zero(n, 0);
  g.pinv = MatrixXd::Zero(n, n);
  if (n == 0) return g;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrized(cov));
  const VectorXd& lambda = es.eigenvalues();
  const double top = std::max(lambda.maxCoeff(), 0.0);
  const double cutoff = top * 1e-12;
  std::vector<Eigen::Index> kept;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (lambda(i) > cutoff && lambda(i) > 0.0) kept.push_back(i);
  }
  g.rank = static_cast<int>(kept.size());
  g.root.resize(n, g.rank);
  for (int c = 0; c < g.rank; ++c) {
    const auto i = kept[static_cast<std::size_t>(c)];
    g.root.col(c) = es.eigenvectors().col(i) * std::sqrt(lambda(i));
    g.pinv += es.eigenvectors().col(i) * es.eigenvectors().col(i).transpose() / lambda(i);
    g.log_pdet += std::log(lambda(i));
  }
  return g;
}

double GaussianFactor::log_density(const VectorXd& x, const VectorXd& mean) const {
  const VectorXd r = x - mean;
  return -0.5 * (rank * std::log(2.0 * std::numbers::pi) + log_pdet + r.dot(pinv * r));
}

MatrixXd TrackingLaw::initial_covariance() const { return sigma0_; }

const MatrixXd& TrackingLaw::injection_covariance(int j) const {
  return j == 0 ? sigma0_ : N[static_cast<std::size_t>(j - 1)];
}

void NominalTrajectory::validate(const DiscreteLQGSystem& sys, double tol) const {
  require(waypoints.size() == controls.size() + 1, "nominal trajectory needs one more waypoint than controls");
  for (std::size_t t = 0; t < controls.size(); ++t) {
    const VectorXd predicted = sys.A * waypoints[t] + sys.B * controls[t];
    const double err = (predicted - waypoints[t + 1]).cwiseAbs().maxCoeff();
    if (!(err <= tol)) {
      std::ostringstream os;
      os << "nominal waypoint " << t + 1 << " deviates from the discrete dynamics by " << err;
      throw std::invalid_argument(os.str());
    }
  }
}

DiscreteLQGSystem discretize(const ContinuousLinearSystem& csys, double dt) {
  require(std::isfinite(dt) && dt > 0.0, "discretize: dt must be positive and finite");
  csys.validate();
  const int d = csys.state_dim();
  const int l = csys.input_dim();

  // exp([[A, B], [0, 0]] dt) = [[e^{A dt}, (int_0^dt e^{As} ds) B], [0, I]]
  MatrixXd aug = MatrixXd::Zero(d + l, d + l);
  aug.topLeftCorner(d, d) = csys.A * dt;
  aug.topRightCorner(d, l) = csys.B * dt;
  const MatrixXd e1 = aug.exp();

  // Van Loan: exp([[-A, V], [0, A^T]] dt) = [[., G12], [0, G22]], V_d = G22^T G12.
  MatrixXd van = MatrixXd::Zero(2 * d, 2 * d);
  van.topLeftCorner(d, d) = -csys.A * dt;
  van.topRightCorner(d, d) = csys.V * dt;
  van.bottomRightCorner(d, d) = csys.A.transpose() * dt;
  const MatrixXd e2 = van.exp();

  DiscreteLQGSystem out;
  out.A = e1.topLeftCorner(d, d);
  out.B = e1.topRightCorner(d, l);
  out.C = csys.C;
  out.V = symmetrized(e2.bottomRightCorner(d, d).transpose() * e2.topRightCorner(d, d));
  out.W = csys.W / dt;
  out.dt = dt;
  if (!all_finite(out.A) || !all_finite(out.B) || !all_finite(out.V)) {
    throw NumericalError("discretize: matrix exponential overflowed");
  }
  return out;
}

TrackingLaw synthesize(const DiscreteLQGSystem& dsys, const TrackingCost& cost, int horizon,
                       const MatrixXd& P0) {
  require(horizon >= 1, "synthesize: horizon must be at least one step");
  const int d = dsys.state_dim();
  const int l = dsys.input_dim();
  const int k = dsys.output_dim();
  cost.validate(d, l);
  require(P0.rows() == d && P0.cols() == d && psd(P0), "synthesize: P0 must be d x d PSD");
  require(dsys.W.rows() == k && pd(dsys.W), "synthesize: W must be positive definite");

  TrackingLaw law;
  law.horizon = horizon;
  law.state_dim = d;
  law.input_dim = l;
  law.output_dim = k;
  law.P0 = P0;
  const auto T = static_cast<std::size_t>(horizon);

  law.S.assign(T + 1, MatrixXd());
  law.L.assign(T, MatrixXd());
  law.S[T] = cost.F;
  for (std::size_t t = T; t-- > 0;) {
    const MatrixXd& next = law.S[t + 1];
    const MatrixXd gram = symmetrized(cost.R + dsys.B.transpose() * next * dsys.B);
    Eigen::LLT<MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("synthesize: R + B^T S B is singular at step " + std::to_string(t));
    }
    const MatrixXd btsa = dsys.B.transpose() * next * dsys.A;
    law.L[t] = -llt.solve(btsa);
    const MatrixXd inner = next - next * dsys.B * llt.solve(dsys.B.transpose() * next);
    law.S[t] = symmetrized(cost.Q + dsys.A.transpose() * inner * dsys.A);
  }

  law.P.assign(T + 1, MatrixXd());
  law.K.assign(T, MatrixXd());
  law.P[0] = symmetrized(P0);
  for (std::size_t t = 0; t < T; ++t) {
    const MatrixXd& p = law.P[t];
    const MatrixXd innov = symmetrized(dsys.W + dsys.C * p * dsys.C.transpose());
    Eigen::LLT<MatrixXd> llt(innov);
    if (llt.info() != Eigen::Success) {
      throw NumericalError("synthesize: W + C P C^T is singular at step " + std::to_string(t));
    }
    const MatrixXd pct = p * dsys.C.transpose();
    law.K[t] = dsys.A * llt.solve(pct.transpose()).transpose();
    const MatrixXd post = p - pct * llt.solve(pct.transpose());
    law.P[t + 1] = symmetrized(dsys.V + dsys.A * post * dsys.A.transpose());
  }

  law.M.assign(T, MatrixXd());
  law.N.assign(T, MatrixXd());
  for (std::size_t t = 0; t < T; ++t) {
    MatrixXd m(2 * d, 2 * d);
    const MatrixXd bl = dsys.B * law.L[t];
    const MatrixXd kc = law.K[t] * dsys.C;
    m.topLeftCorner(d, d) = dsys.A;
    m.topRightCorner(d, d) = bl;
    m.bottomLeftCorner(d, d) = kc;
    m.bottomRightCorner(d, d) = dsys.A + bl - kc;
    law.M[t] = m;
    MatrixXd n = MatrixXd::Zero(2 * d, 2 * d);
    n.topLeftCorner(d, d) = dsys.V;
    n.bottomRightCorner(d, d) = symmetrized(law.K[t] * dsys.W * law.K[t].transpose());
    law.N[t] = n;
  }

  law.sigma0_ = MatrixXd::Zero(2 * d, 2 * d);
  law.sigma0_.topLeftCorner(d, d) = law.P[0];

  law.injection.reserve(T + 1);
  law.injection.push_back(GaussianFactor::from_covariance(law.sigma0_));
  for (std::size_t t = 0; t < T; ++t) law.injection.push_back(GaussianFactor::from_covariance(law.N[t]));
  return law;
}

MomentSchedule propagate_moments(const TrackingLaw& law, const VectorXd& mu0, const MatrixXd& sigma0,
                                 int horizon) {
  const int n = law.combined_dim();
  require(mu0.size() == n && sigma0.rows() == n && sigma0.cols() == n,
          "propagate_moments: initial moments have the wrong dimension");
  require(horizon >= 0 && horizon <= law.horizon, "propagate_moments: horizon exceeds the law");
  MomentSchedule out;
  out.mu.reserve(static_cast<std::size_t>(horizon) + 1);
  out.sigma.reserve(static_cast<std::size_t>(horizon) + 1);
  out.mu.push_back(mu0);
  out.sigma.push_back(symmetrized(sigma0));
  for (int t = 0; t < horizon; ++t) {
    const auto i = static_cast<std::size_t>(t);
    out.mu.push_back(law.M[i] * out.mu.back());
    out.sigma.push_back(symmetrized(law.M[i] * out.sigma.back() * law.M[i].transpose() + law.N[i]));
  }
  return out;
}

MomentSchedule propagate_moments(const TrackingLaw& law) {
  return propagate_moments(law, VectorXd::Zero(law.combined_dim()), law.initial_covariance(), law.horizon);
}

RolloutEngine::RolloutEngine(const TrackingLaw& law) : horizon_(law.horizon), n_(law.combined_dim()) {
  if (n_ > kMaxCombinedDim) {
    throw std::invalid_argument("RolloutEngine: combined dimension exceeds " + std::to_string(kMaxCombinedDim));
  }
  const auto n = static_cast<std::size_t>(n_);
  closed_loop_.reserve(law.M.size() * n * n);
  for (const MatrixXd& m : law.M) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) closed_loop_.push_back(m(r, c));
  }
  for (const GaussianFactor& g : law.injection) {
    root_offsets_.push_back(roots_.size());
    ranks_.push_back(g.rank);
    for (Eigen::Index r = 0; r < g.root.rows(); ++r)
      for (Eigen::Index c = 0; c < g.root.cols(); ++c) roots_.push_back(g.root(r, c));
  }
}

Rollout simulate_rollout(const NominalTrajectory& nominal, const TrackingLaw& law, const ShiftSchedule* shifts,
                         std::uint64_t seed, std::uint64_t particle) {
  require(nominal.horizon() == law.horizon, "simulate_rollout: nominal and law horizons differ");
  const int n = law.combined_dim();
  const int d = law.state_dim;
  const int T = law.horizon;
  std::vector<double> flat_shift;
  int shift_len = 0;
  if (shifts != nullptr) {
    require(static_cast<int>(shifts->size()) <= T + 1, "simulate_rollout: more shifts than noise injections");
    shift_len = static_cast<int>(shifts->size());
    for (const VectorXd& s : *shifts) {
      require(s.size() == n, "simulate_rollout: shift has the wrong dimension");
      flat_shift.insert(flat_shift.end(), s.data(), s.data() + n);
    }
  }
  std::vector<double> noise(static_cast<std::size_t>((T + 1) * n));
  Rollout out;
  out.states.reserve(static_cast<std::size_t>(T) + 1);
  out.estimates.reserve(static_cast<std::size_t>(T) + 1);
  RolloutEngine engine(law);
  engine.run(ParticleStream(seed, particle), flat_shift.data(), shift_len, noise.data(),
             [&](int t, const double* z) {
               const VectorXd& xn = nominal.waypoints[static_cast<std::size_t>(t)];
               out.states.push_back(xn + Eigen::Map<const VectorXd>(z, d));
               out.estimates.push_back(xn + Eigen::Map<const VectorXd>(z + d, d));
               return true;
             });
  out.noise.reserve(static_cast<std::size_t>(T) + 1);
  for (int j = 0; j <= T; ++j) {
    VectorXd nu = Eigen::Map<const VectorXd>(noise.data() + static_cast<std::ptrdiff_t>(j) * n, n);
    const GaussianFactor& g = law.injection[static_cast<std::size_t>(j)];
    const VectorXd zero = VectorXd::Zero(n);
    out.log_density_nominal += g.log_density(nu, zero);
    out.log_density_sampling += j < shift_len ? g.log_density(nu, (*shifts)[static_cast<std::size_t>(j)])
                                              : g.log_density(nu, zero);
    out.noise.push_back(std::move(nu));
  }
  return out;
}

}  // namespace mcmp
