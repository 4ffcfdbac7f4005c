#pragma once

// Stepped simulation of the inventory mission: a room with shelves of
// labelled objects, a ground robot and an aerial robot following waypoints,
// and the pose, image and detection topics they publish.

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "fleetledger/bytes.hpp"

namespace fleetledger::sim {

struct Vec3 {
  double x = 0, y = 0, z = 0;
  bool operator==(const Vec3&) const = default;
};

struct Pose {
  double x = 0, y = 0, z = 0, yaw = 0;
  bool operator==(const Pose&) const = default;
};

struct WorldObject {
  std::string label;
  Vec3 position;
};

struct Shelf {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // floor segment
  std::vector<std::size_t> objects;       // indices into WorldModel::objects
};

struct WorldModel {
  double width = 6.32;   // meters along x
  double depth = 6.32;   // meters along y
  std::vector<Shelf> shelves;
  std::vector<WorldObject> objects;

  double area() const { return width * depth; }
  bool contains(double x, double y) const { return x >= 0 && x <= width && y >= 0 && y <= depth; }
  /// Throws Error(invalid_argument) when an object or shelf leaves the room.
  void validate() const;

  /// Three shelves of six objects each in a ~40 m² room.
  static WorldModel default_world();
};

nlohmann::json to_json(const WorldModel& w);
WorldModel world_from_json(const nlohmann::json& j);

enum class RobotKind { ground, aerial };

struct SensorSpec {
  double range = 2.0;  // meters
  double fov = 1.5708;  // radians, full angle
};

struct RobotSpec {
  std::string id;
  RobotKind kind = RobotKind::ground;
  double speed = 0.3;  // m/s
  Pose start;
  SensorSpec sensor;
  std::vector<Vec3> waypoints;
};

struct MissionSpec {
  double duration_s = 100;
  double tick_hz = 30;
  double pose_hz = 10;
  double image_hz = 30;
  double detector_hz = 5;
  std::uint64_t seed = 1;
  std::vector<RobotSpec> robots;

  /// Lawnmower sweep at 0.3 m/s for "ground", perimeter loop at z = 1.5 m
  /// and 0.5 m/s for "aerial".
  static MissionSpec default_mission(const WorldModel& world);
};

nlohmann::json to_json(const MissionSpec& m);
MissionSpec mission_from_json(const nlohmann::json& j);

struct Waypoint {
  Vec3 position;
  std::string command_id;  // empty for mission waypoints
  bool last_of_command = false;
};

struct RobotState {
  RobotSpec spec;
  Pose pose;
  std::deque<Waypoint> queue;
};

struct PoseMsg {
  std::string robot_id;
  Pose pose;
};

struct DetectionMsg {
  std::string robot_id;
  std::uint64_t object_index = 0;
  std::string label;
  Vec3 position;
  double confidence = 0;
};

struct ImageStubMsg {
  std::string robot_id;
  std::uint64_t size_bytes = 0;
};

using Payload = std::variant<PoseMsg, DetectionMsg, ImageStubMsg>;

struct Message {
  std::string topic;
  std::int64_t stamp = 0;  // ns
  Payload payload;
};

Bytes encode_message(const Message& m);
Message decode_message(ByteView bytes);
nlohmann::json to_json(const Message& m);

std::string pose_topic(const std::string& robot_id);
std::string image_topic(const std::string& robot_id);
std::string detection_topic(const std::string& robot_id);

/// Synchronous in-process publish/subscribe. Handlers run inside publish
/// in subscription order; a handler may unsubscribe but must not publish
/// re-entrantly on the same topic from a different thread.
class TopicBus {
 public:
  using Handler = std::function<void(const Message&)>;
  using SubscriptionId = std::uint64_t;

  SubscriptionId subscribe(const std::string& topic, Handler handler);
  /// Every topic.
  SubscriptionId subscribe_all(Handler handler);
  void unsubscribe(SubscriptionId id);
  void publish(const Message& m);
  std::uint64_t published() const { return published_; }

 private:
  struct Entry {
    std::optional<std::string> topic;
    Handler handler;
  };
  std::map<SubscriptionId, Entry> subs_;
  SubscriptionId next_ = 1;
  std::uint64_t published_ = 0;
};

/// Pseudo detector confidence in [0.5, 1) from (seed, robot, object).
double detection_confidence(std::uint64_t seed, const std::string& robot_id, std::uint64_t object_index);

/// True when `object` lies within range and within half the FOV of the
/// robot's heading (bearing measured in the horizontal plane).
bool in_view(const Pose& pose, const SensorSpec& sensor, const Vec3& object);

class Simulation {
 public:
  using CommandDone = std::function<void(const std::string& robot_id, const std::string& command_id)>;

  Simulation(WorldModel world, MissionSpec mission, TopicBus& bus);

  /// Moves every robot toward its head waypoint for `dt` seconds.
  void step(double dt);
  /// Detections for `robot` at its current pose, applying hysteresis.
  std::vector<DetectionMsg> sense(const std::string& robot_id);
  /// One tick: step by 1/tick_hz, then publish whatever is due.
  void tick();
  /// Ticks until the mission clock reaches `until_ns`.
  void run_until(std::int64_t until_ns);

  std::int64_t now() const { return now_ns_; }
  std::uint64_t ticks() const { return ticks_; }
  std::int64_t tick_period_ns() const { return tick_ns_; }
  bool finished() const { return now_ns_ >= end_ns_; }
  std::int64_t end_ns() const { return end_ns_; }

  /// Command waypoints go ahead of the remaining mission waypoints but
  /// behind earlier commands.
  void enqueue_command(const std::string& robot_id, const std::string& command_id, const std::vector<Vec3>& points);
  void on_command_done(CommandDone fn) { command_done_ = std::move(fn); }

  const WorldModel& world() const { return world_; }
  const MissionSpec& mission() const { return mission_; }
  const std::vector<RobotState>& robots() const { return robots_; }
  const RobotState& robot(const std::string& id) const;
  /// Object indices each robot has detected at least once.
  const std::map<std::string, std::set<std::uint64_t>>& detected() const { return detected_; }

  struct TrajectoryRow {
    std::string robot_id;
    std::int64_t stamp;
    Pose pose;
  };
  /// Every published pose, in publish order.
  const std::vector<TrajectoryRow>& trajectory() const { return trajectory_; }
  /// `robot_id,stamp,x,y,z` with a header line.
  std::string trajectory_csv() const;

 private:
  RobotState& mutable_robot(const std::string& id);
  bool due(double rate_hz) const;
  void move(RobotState& r, double dt);

  WorldModel world_;
  MissionSpec mission_;
  TopicBus& bus_;
  std::vector<RobotState> robots_;
  std::int64_t now_ns_ = 0;
  std::int64_t tick_ns_;
  std::int64_t end_ns_;
  std::uint64_t ticks_ = 0;
  std::map<std::pair<std::string, std::uint64_t>, bool> in_range_;
  std::map<std::string, std::set<std::uint64_t>> detected_;
  std::vector<TrajectoryRow> trajectory_;
  CommandDone command_done_;
};

WorldModel load_world(const std::filesystem::path& file);
MissionSpec load_mission(const std::filesystem::path& file);

}  // namespace fleetledger::sim
