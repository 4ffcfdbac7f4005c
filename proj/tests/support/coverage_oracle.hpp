#pragma once

// Geometric coverage of a scripted mission, computed by walking each
// robot's waypoint polyline in fine steps independently of the simulator.

#include <cstdint>
#include <map>
#include <set>
#include <string>

#include "fleetledger/sim.hpp"

namespace oracle {

/// True when `object` is within `range` (3D) and the horizontal angle
/// between heading and object direction is at most fov/2. Uses the dot
/// product rather than angle arithmetic.
bool sees(double x, double y, double z, double yaw, double range, double fov, const fleetledger::sim::Vec3& object);

/// Object indices each robot could see somewhere along its path.
std::map<std::string, std::set<std::uint64_t>> path_coverage(const fleetledger::sim::WorldModel& world,
                                                              const fleetledger::sim::MissionSpec& mission,
                                                              double step_m = 0.01);

}  // namespace oracle
