#pragma once

#include <string_view>
#include <vector>

#include "mcmp/geometry.hpp"

namespace mcmp {

// Per-waypoint collision probabilities, one entry per nominal waypoint.
struct WaypointCPs {
  std::vector<double> cp;
  std::size_t count() const { return cp.size(); }
};

enum class Combination { additive, multiplicative };

std::string_view to_string(Combination c);

// cp_t = min(1, sum of tangent half-plane probabilities at waypoint t).
WaypointCPs pointwise_cps(const NominalTrajectory& nominal, const MomentSchedule& moments, const CloseSet& close);

// additive: sum cp_t (uncapped; values above one are vacuous bounds).
// multiplicative: 1 - prod (1 - cp_t).
double combine(const WaypointCPs& cps, Combination method);

}  // namespace mcmp
