#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcmp/rng.hpp"

namespace mcmp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Raised when a numerical procedure cannot produce a meaningful answer
// (singular gain denominators, unreachable shift directions, ...).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Largest combined (state, estimate) dimension the rollout engine supports:
// a 3-D double integrator has 6 states, 12 combined.
inline constexpr int kMaxCombinedDim = 12;

// dx = A_c x dt + B_c u dt + dv,  y = C_c x + w  (noise intensities V_c, W_c).
struct ContinuousLinearSystem {
  MatrixXd A, B, C, V, W;

  int state_dim() const { return static_cast<int>(A.rows()); }
  int input_dim() const { return static_cast<int>(B.cols()); }
  int output_dim() const { return static_cast<int>(C.rows()); }
  void validate() const;
};

struct DiscreteLQGSystem {
  MatrixXd A, B, C, V, W;
  double dt = 0.0;

  int state_dim() const { return static_cast<int>(A.rows()); }
  int input_dim() const { return static_cast<int>(B.cols()); }
  int output_dim() const { return static_cast<int>(C.rows()); }
};

struct TrackingCost {
  MatrixXd Q, R, F;
  void validate(int state_dim, int input_dim) const;
};

// Square-root and pseudo-inverse of a PSD covariance, restricted to its
// support. Eigenvalues below a relative cutoff (including slightly negative
// round-off) are treated as exact zeros.
struct GaussianFactor {
  MatrixXd root;  // n x rank, cov = root * root^T
  MatrixXd pinv;  // Moore-Penrose pseudo-inverse of cov
  double log_pdet = 0.0;
  int rank = 0;

  static GaussianFactor from_covariance(const MatrixXd& cov);
  // Log density of x under N(mean, cov) on the support of cov.
  double log_density(const VectorXd& x, const VectorXd& mean) const;
};

// Time-varying LQG tracking law: per-step LQR gains L_t (from the backward
// Riccati recursion), predictor-form Kalman gains K_t, and the resulting
// closed-loop matrices M_t and injected-noise covariances N_t acting on the
// stacked deviation [dx; dx_hat].
//
// Noise injections are indexed j = 0..T: injection 0 is the initial
// deviation draw with covariance diag(P0, 0); injection j >= 1 is n_{j-1}.
struct TrackingLaw {
  int horizon = 0;
  int state_dim = 0;
  int input_dim = 0;
  int output_dim = 0;
  std::vector<MatrixXd> L;  // T entries
  std::vector<MatrixXd> S;  // T+1 entries, S[T] = F
  std::vector<MatrixXd> K;  // T entries
  std::vector<MatrixXd> P;  // T+1 entries, P[0] = P0
  std::vector<MatrixXd> M;  // T entries
  std::vector<MatrixXd> N;  // T entries
  MatrixXd P0;
  std::vector<GaussianFactor> injection;  // T+1 entries

  int combined_dim() const { return 2 * state_dim; }
  MatrixXd initial_covariance() const;
  const MatrixXd& injection_covariance(int j) const;

 private:
  MatrixXd sigma0_;
  friend TrackingLaw synthesize(const DiscreteLQGSystem&, const TrackingCost&, int,
                                const MatrixXd&);
};

struct NominalTrajectory {
  std::vector<VectorXd> waypoints;  // T+1 states
  std::vector<VectorXd> controls;   // T inputs
  double dt = 0.0;

  int horizon() const { return static_cast<int>(controls.size()); }
  // Throws std::invalid_argument if counts mismatch or the waypoints do not
  // follow x_{t+1} = A x_t + B u_t to within `tol` (infinity norm).
  void validate(const DiscreteLQGSystem& sys, double tol = 1e-8) const;
};

struct MomentSchedule {
  std::vector<VectorXd> mu;
  std::vector<MatrixXd> sigma;

  // Upper-left block of sigma[t] restricted to the first `dims` coordinates.
  MatrixXd state_block(int t, int dims) const {
    return sigma[static_cast<std::size_t>(t)].topLeftCorner(dims, dims);
  }
};

// Mean offsets for the first shifts.size() noise injections (see TrackingLaw).
using ShiftSchedule = std::vector<VectorXd>;

struct Rollout {
  std::vector<VectorXd> states;     // x_t = x_nom_t + dx_t, t = 0..T
  std::vector<VectorXd> estimates;  // x_nom_t + dx_hat_t
  std::vector<VectorXd> noise;      // injections j = 0..T
  double log_density_nominal = 0.0;
  double log_density_sampling = 0.0;
};

DiscreteLQGSystem discretize(const ContinuousLinearSystem& csys, double dt);

TrackingLaw synthesize(const DiscreteLQGSystem& dsys, const TrackingCost& cost, int horizon,
                       const MatrixXd& P0);

MomentSchedule propagate_moments(const TrackingLaw& law, const VectorXd& mu0,
                                 const MatrixXd& sigma0, int horizon);
MomentSchedule propagate_moments(const TrackingLaw& law);

Rollout simulate_rollout(const NominalTrajectory& nominal, const TrackingLaw& law,
                         const ShiftSchedule* shifts, std::uint64_t seed,
                         std::uint64_t particle = 0);

// Flattened closed-loop recursion used by every sampler, so a rollout traced
// by simulate_rollout and one evaluated inside an estimator are the same
// floating-point computation.
class RolloutEngine {
 public:
  explicit RolloutEngine(const TrackingLaw& law);

  int horizon() const { return horizon_; }
  int combined_dim() const { return n_; }

  // Runs one particle. `shift` holds shift_len rows of combined_dim values.
  // visit(t, z) receives the combined deviation after injection t and
  // returns false to stop early. When noise_out is non-null it receives
  // (T+1) * combined_dim injected noise values.
  template <class Visitor>
  void run(const ParticleStream& stream, const double* shift, int shift_len, double* noise_out,
           Visitor&& visit) const {
    switch (n_) {
      case 4:
        run_fixed<4>(stream, shift, shift_len, noise_out, visit);
        break;
      case 8:
        run_fixed<8>(stream, shift, shift_len, noise_out, visit);
        break;
      default:
        run_fixed<0>(stream, shift, shift_len, noise_out, visit);
    }
  }

 private:
  // N > 0 fixes the combined dimension at compile time; N = 0 reads n_.
  template <int N, class Visitor>
  void run_fixed(const ParticleStream& stream, const double* shift, int shift_len, double* noise_out,
                 Visitor& visit) const {
    double z[kMaxCombinedDim]{};
    double next[kMaxCombinedDim];
    double xi[kMaxCombinedDim];
    double nu[kMaxCombinedDim];
    const int n = N > 0 ? N : n_;
    for (int j = 0; j <= horizon_; ++j) {
      const int rank = ranks_[static_cast<std::size_t>(j)];
      stream.normals(static_cast<std::uint32_t>(j), std::span<double>(xi, static_cast<std::size_t>(rank)));
      const double* root = roots_.data() + root_offsets_[static_cast<std::size_t>(j)];
      for (int r = 0; r < n; ++r) {
        double acc = 0.0;
        const double* row = root + r * rank;
        for (int c = 0; c < rank; ++c) acc += row[c] * xi[c];
        nu[r] = acc;
      }
      if (j < shift_len) {
        const double* s = shift + static_cast<std::ptrdiff_t>(j) * n;
        for (int r = 0; r < n; ++r) nu[r] += s[r];
      }
      if (noise_out != nullptr) {
        double* out = noise_out + static_cast<std::ptrdiff_t>(j) * n;
        for (int r = 0; r < n; ++r) out[r] = nu[r];
      }
      if (j == 0) {
        for (int r = 0; r < n; ++r) z[r] = nu[r];
      } else {
        const double* m = closed_loop_.data() + static_cast<std::ptrdiff_t>(j - 1) * n * n;
        for (int r = 0; r < n; ++r) {
          double acc = nu[r];
          const double* row = m + r * n;
          for (int c = 0; c < n; ++c) acc += row[c] * z[c];
          next[r] = acc;
        }
        for (int r = 0; r < n; ++r) z[r] = next[r];
      }
      if (!visit(j, static_cast<const double*>(z))) return;
    }
  }

  int horizon_ = 0;
  int n_ = 0;
  std::vector<double> closed_loop_;  // T blocks, row-major n x n
  std::vector<double> roots_;        // T+1 blocks, row-major n x rank_j
  std::vector<std::size_t> root_offsets_;
  std::vector<int> ranks_;
};

}  // namespace mcmp
