#include "coverage_oracle.hpp"

#include <algorithm>
#include <cmath>

namespace oracle {

using fleetledger::sim::RobotKind;
using fleetledger::sim::Vec3;

bool sees(double x, double y, double z, double yaw, double range, double fov, const Vec3& object) {
  const double dx = object.x - x, dy = object.y - y, dz = object.z - z;
  if (dx * dx + dy * dy + dz * dz > range * range) return false;
  const double horizontal = std::hypot(dx, dy);
  if (horizontal == 0) return true;
  const double cos_angle = (dx * std::cos(yaw) + dy * std::sin(yaw)) / horizontal;
  return cos_angle >= std::cos(fov / 2);
}

std::map<std::string, std::set<std::uint64_t>> path_coverage(const fleetledger::sim::WorldModel& world,
                                                              const fleetledger::sim::MissionSpec& mission,
                                                              double step_m) {
  std::map<std::string, std::set<std::uint64_t>> out;
  for (const auto& robot : mission.robots) {
    auto& seen = out[robot.id];
    Vec3 at{robot.start.x, robot.start.y, robot.kind == RobotKind::ground ? 0.0 : robot.start.z};
    double yaw = robot.start.yaw;
    auto look = [&] {
      for (std::size_t i = 0; i < world.objects.size(); ++i) {
        if (sees(at.x, at.y, at.z, yaw, robot.sensor.range, robot.sensor.fov, world.objects[i].position)) {
          seen.insert(i);
        }
      }
    };
    look();
    for (auto target : robot.waypoints) {
      if (robot.kind == RobotKind::ground) target.z = 0;
      const double dx = target.x - at.x, dy = target.y - at.y, dz = target.z - at.z;
      const double len = std::sqrt(dx * dx + dy * dy + dz * dz);
      if (dx != 0 || dy != 0) yaw = std::atan2(dy, dx);
      const auto steps = static_cast<int>(std::ceil(len / step_m));
      const Vec3 from = at;
      for (int s = 1; s <= steps; ++s) {
        const double f = static_cast<double>(s) / steps;
        at = {from.x + dx * f, from.y + dy * f, from.z + dz * f};
        look();
      }
      at = target;
    }
  }
  return out;
}

}  // namespace oracle
