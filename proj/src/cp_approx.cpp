#include "mcmp/cp_approx.hpp"

#include <cmath>
#include <stdexcept>

namespace mcmp {

std::string_view to_string(Combination c) { return c == Combination::additive ? "additive" : "multiplicative"; }

WaypointCPs pointwise_cps(const NominalTrajectory& nominal, const MomentSchedule& moments, const CloseSet& close) {
  if (moments.sigma.size() < nominal.waypoints.size()) {
    throw std::invalid_argument("pointwise_cps: moments do not cover the nominal trajectory");
  }
  WaypointCPs out;
  out.cp.assign(nominal.waypoints.size(), 0.0);
  for (const ClosePoint& p : close.points) {
    if (p.t < 0 || static_cast<std::size_t>(p.t) >= out.cp.size()) {
      throw std::invalid_argument("pointwise_cps: close set was built on a different nominal");
    }
    out.cp[static_cast<std::size_t>(p.t)] += p.hit_prob;
  }
  for (double& c : out.cp) c = std::min(1.0, c);
  return out;
}

double combine(const WaypointCPs& cps, Combination method) {
  if (method == Combination::additive) {
    double sum = 0.0;
    for (double c : cps.cp) sum += c;
    return sum;
  }
  // log1p keeps tiny per-waypoint probabilities from vanishing in the product.
  double log_survive = 0.0;
  for (double c : cps.cp) {
    if (c >= 1.0) return 1.0;
    log_survive += std::log1p(-c);
  }
  return 0.0 - std::expm1(log_survive);  // 0.0 - x avoids -0 when nothing is close
}

}  // namespace mcmp
