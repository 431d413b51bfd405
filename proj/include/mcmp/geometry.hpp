#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <vector>

#include "mcmp/lqg.hpp"

namespace mcmp {

// {x : normal . x <= offset}, with |normal| = 1.
struct Halfspace {
  VectorXd normal;
  double offset = 0.0;
};

// Bounded, nonempty intersection of half-spaces in workspace coordinates.
// Inflation by s offsets every face outward: offset -> offset + s.
class ConvexObstacle {
 public:
  ConvexObstacle() = default;
  // Normalizes the normals; throws std::invalid_argument when the region is
  // empty or unbounded.
  explicit ConvexObstacle(std::vector<Halfspace> faces);

  static ConvexObstacle box(const VectorXd& lower, const VectorXd& upper);
  // Convex hull of the given points (2-D or 3-D).
  static ConvexObstacle from_vertices(const std::vector<VectorXd>& vertices);

  int dim() const { return faces_.empty() ? 0 : static_cast<int>(faces_.front().normal.size()); }
  const std::vector<Halfspace>& faces() const { return faces_; }
  bool contains(const VectorXd& x, double inflation = 0.0) const;
  // Vertices of the region inflated by `inflation`.
  std::vector<VectorXd> vertices(double inflation = 0.0) const;
  VectorXd centroid() const;

 private:
  std::vector<Halfspace> faces_;
};

struct AxisBox {
  VectorXd lower, upper;
  bool contains(const VectorXd& x) const {
    return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
  }
  double volume() const { return (upper - lower).prod(); }
};

struct GoalRegion {
  enum class Shape { box, ball };
  Shape shape = Shape::ball;
  VectorXd lower, upper;  // box
  VectorXd center;        // ball
  double radius = 0.0;

  bool contains(const VectorXd& position) const;
  // Uniform point of the region; `uniform` yields draws in [0, 1).
  VectorXd sample(const std::function<double()>& uniform) const;
};

struct Workspace {
  std::vector<ConvexObstacle> obstacles;
  AxisBox bounds;
  GoalRegion goal;
  VectorXd start;  // full state; the first dim() entries are the position
  double inflation = 0.0;

  int dim() const { return static_cast<int>(bounds.lower.size()); }
};

Workspace inflate(const Workspace& ws, double s);

// Positions are taken from the first ws.dim() coordinates of x / p / q.
bool point_in_collision(const VectorXd& x, const Workspace& ws);
bool segment_in_collision(const VectorXd& p, const VectorXd& q, const Workspace& ws, double resolution);

// Flattened obstacle set at a fixed inflation for hot loops.
class ObstacleIndex {
 public:
  ObstacleIndex() = default;
  ObstacleIndex(const std::vector<ConvexObstacle>& obstacles, double inflation);

  int dim() const { return dim_; }
  bool empty() const { return spans_.empty(); }
  bool point_hits(const double* x) const;
  // Exact segment-vs-polytope test by parametric clipping.
  bool segment_hits(const double* p, const double* q) const;

 private:
  struct Span {
    std::size_t first_face;
    std::size_t face_count;
  };
  int dim_ = 0;
  std::vector<Span> spans_;
  std::vector<double> normals_;  // face-major, dim_ entries each
  std::vector<double> offsets_;
  std::vector<double> box_lo_;   // per obstacle bounding box
  std::vector<double> box_hi_;
};

struct MahalanobisProjection {
  VectorXd z;
  double mdist = 0.0;
  int iterations = 0;
};

// argmin_{a in obstacle} (a - x)^T sigma^{-1} (a - x). Dual coordinate
// ascent (Hildreth) in the whitened frame, followed by an exact solve on the
// detected active set. Throws NumericalError when neither converges.
MahalanobisProjection mahalanobis_closest_point(const ConvexObstacle& obstacle, const VectorXd& x,
                                                const MatrixXd& sigma, double inflation = 0.0);

inline double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

struct ClosePoint {
  int t = 0;
  int obstacle_id = 0;
  VectorXd z;       // point on the obstacle (workspace coordinates)
  VectorXd normal;  // sigma^{-1}(z - x_nom) / mdist: normal . dx ~ N(0, 1)
  double mdist = 0.0;
  double hit_prob = 0.5;
  bool in_mixture = true;

  // True when the deviation dx (workspace coordinates) crosses the tangent half-plane.
  bool crossed(const double* dx) const {
    double s = 0.0;
    for (Eigen::Index i = 0; i < normal.size(); ++i) s += normal(i) * dx[i];
    return s >= mdist;
  }
};

struct CloseSetOptions {
  double mdist_cutoff = 8.0;
  double planned_particles = 2000.0;
  double prune_threshold = 0.5;  // minimum expected mixture draws at planned_particles
};

struct CloseSet {
  std::vector<ClosePoint> points;  // occlusion-free; all enter the control variate
  double theta = 0.0;              // sum of hit_prob over points
  bool empty() const { return points.empty(); }
  std::size_t mixture_size() const;
};

CloseSet build_close_set(const NominalTrajectory& nominal, const MomentSchedule& moments, const Workspace& ws,
                         const CloseSetOptions& options = {});

}  // namespace mcmp
