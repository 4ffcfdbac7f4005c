#include "fleetledger/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "fleetledger/codec.hpp"
#include "fleetledger/crypto.hpp"
#include "fleetledger/error.hpp"

namespace fleetledger::sim {

namespace {

constexpr double kArrivalTolerance = 0.05;
constexpr double kAerialMinZ = 0.5;
constexpr double kAerialMaxZ = 3.0;

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::invalid_argument, what); }

double wrap_angle(double a) {
  while (a > std::numbers::pi) a -= 2 * std::numbers::pi;
  while (a < -std::numbers::pi) a += 2 * std::numbers::pi;
  return a;
}

nlohmann::json vec_json(const Vec3& v) { return nlohmann::json::array({v.x, v.y, v.z}); }

Vec3 vec_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) bad("expected [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

std::string_view kind_name(RobotKind k) { return k == RobotKind::ground ? "ground" : "aerial"; }

RobotKind kind_from(std::string_view s) {
  if (s == "ground") return RobotKind::ground;
  if (s == "aerial") return RobotKind::aerial;
  bad("unknown robot kind '" + std::string(s) + "'");
}

nlohmann::json read_json_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::io_error, "cannot read " + file.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    bad(file.string() + ": " + e.what());
  }
}

}  // namespace

void WorldModel::validate() const {
  if (!(width > 0) || !(depth > 0)) bad("room dimensions must be positive");
  for (const auto& o : objects) {
    if (!contains(o.position.x, o.position.y)) bad("object '" + o.label + "' lies outside the room");
  }
  for (const auto& s : shelves) {
    if (!contains(s.x0, s.y0) || !contains(s.x1, s.y1)) bad("shelf lies outside the room");
    for (auto i : s.objects) {
      if (i >= objects.size()) bad("shelf references unknown object " + std::to_string(i));
    }
  }
}

WorldModel WorldModel::default_world() {
  static const std::vector<std::string> labels = {"bottle", "cup",  "book",     "laptop", "backpack", "clock",
                                                  "vase",   "bowl", "keyboard", "mouse",  "suitcase", "umbrella"};
  WorldModel w;
  const double heights[] = {0.3, 0.8, 1.2};
  std::size_t next_label = 0;
  for (double y : {1.6, 3.2, 4.8}) {
    Shelf shelf{1.2, y, 5.1, y, {}};
    for (int i = 0; i < 6; ++i) {
      shelf.objects.push_back(w.objects.size());
      w.objects.push_back({labels[next_label++ % labels.size()], {1.4 + 0.7 * i, y, heights[i % 3]}});
    }
    w.shelves.push_back(std::move(shelf));
  }
  return w;
}

nlohmann::json to_json(const WorldModel& w) {
  nlohmann::json shelves = nlohmann::json::array();
  for (const auto& s : w.shelves) {
    shelves.push_back({{"from", {s.x0, s.y0}}, {"to", {s.x1, s.y1}}, {"objects", s.objects}});
  }
  nlohmann::json objects = nlohmann::json::array();
  for (std::size_t i = 0; i < w.objects.size(); ++i) {
    objects.push_back({{"index", i}, {"label", w.objects[i].label}, {"position", vec_json(w.objects[i].position)}});
  }
  return {{"width", w.width}, {"depth", w.depth}, {"shelves", shelves}, {"objects", objects}};
}

WorldModel world_from_json(const nlohmann::json& j) {
  WorldModel w;
  try {
    w.width = j.value("width", w.width);
    w.depth = j.value("depth", w.depth);
    for (const auto& o : j.at("objects")) w.objects.push_back({o.at("label").get<std::string>(), vec_from_json(o.at("position"))});
    if (j.contains("shelves")) {
      for (const auto& s : j.at("shelves")) {
        Shelf shelf;
        shelf.x0 = s.at("from").at(0).get<double>();
        shelf.y0 = s.at("from").at(1).get<double>();
        shelf.x1 = s.at("to").at(0).get<double>();
        shelf.y1 = s.at("to").at(1).get<double>();
        shelf.objects = s.value("objects", std::vector<std::size_t>{});
        w.shelves.push_back(std::move(shelf));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    bad(std::string("world spec: ") + e.what());
  }
  w.validate();
  return w;
}

MissionSpec MissionSpec::default_mission(const WorldModel& world) {
  MissionSpec m;
  const double lo = 0.4;
  const double hi_x = world.width - 0.42;

  RobotSpec ground;
  ground.id = "ground";
  ground.kind = RobotKind::ground;
  ground.speed = 0.3;
  ground.sensor = {2.0, std::numbers::pi / 2};
  ground.start = {lo, 0.8, 0, 0};
  bool east = true;
  for (double y = 0.8; y < world.depth; y += 1.6) {
    if (y != 0.8) ground.waypoints.push_back({east ? lo : hi_x, y, 0});
    ground.waypoints.push_back({east ? hi_x : lo, y, 0});
    east = !east;
  }

  RobotSpec aerial;
  aerial.id = "aerial";
  aerial.kind = RobotKind::aerial;
  aerial.speed = 0.5;
  aerial.sensor = {3.0, 2 * std::numbers::pi / 3};
  aerial.start = {lo, lo, 1.5, 0};
  const double hi_y = world.depth - 0.42;
  for (int loop = 0; loop < 2; ++loop) {
    aerial.waypoints.push_back({hi_x, lo, 1.5});
    aerial.waypoints.push_back({hi_x, hi_y, 1.5});
    aerial.waypoints.push_back({lo, hi_y, 1.5});
    aerial.waypoints.push_back({lo, lo, 1.5});
  }

  m.robots = {ground, aerial};
  return m;
}

nlohmann::json to_json(const MissionSpec& m) {
  nlohmann::json robots = nlohmann::json::array();
  for (const auto& r : m.robots) {
    nlohmann::json wps = nlohmann::json::array();
    for (const auto& w : r.waypoints) wps.push_back(vec_json(w));
    robots.push_back({{"id", r.id},
                      {"kind", kind_name(r.kind)},
                      {"speed", r.speed},
                      {"start", {r.start.x, r.start.y, r.start.z, r.start.yaw}},
                      {"sensor", {{"range", r.sensor.range}, {"fov", r.sensor.fov}}},
                      {"waypoints", wps}});
  }
  return {{"duration_s", m.duration_s}, {"tick_hz", m.tick_hz},         {"pose_hz", m.pose_hz},
          {"image_hz", m.image_hz},     {"detector_hz", m.detector_hz}, {"seed", m.seed},
          {"robots", robots}};
}

MissionSpec mission_from_json(const nlohmann::json& j) {
  MissionSpec m;
  try {
    m.duration_s = j.value("duration_s", m.duration_s);
    m.tick_hz = j.value("tick_hz", m.tick_hz);
    m.pose_hz = j.value("pose_hz", m.pose_hz);
    m.image_hz = j.value("image_hz", m.image_hz);
    m.detector_hz = j.value("detector_hz", m.detector_hz);
    m.seed = j.value("seed", m.seed);
    for (const auto& r : j.at("robots")) {
      RobotSpec spec;
      spec.id = r.at("id").get<std::string>();
      spec.kind = kind_from(r.value("kind", std::string("ground")));
      spec.speed = r.value("speed", spec.speed);
      if (r.contains("start")) {
        const auto& s = r.at("start");
        spec.start = {s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>(),
                      s.size() > 3 ? s.at(3).get<double>() : 0.0};
      }
      if (r.contains("sensor")) {
        spec.sensor.range = r.at("sensor").value("range", spec.sensor.range);
        spec.sensor.fov = r.at("sensor").value("fov", spec.sensor.fov);
      }
      for (const auto& w : r.value("waypoints", nlohmann::json::array())) spec.waypoints.push_back(vec_from_json(w));
      m.robots.push_back(std::move(spec));
    }
  } catch (const nlohmann::json::exception& e) {
    bad(std::string("mission spec: ") + e.what());
  }
  if (!(m.duration_s > 0) || !(m.tick_hz > 0) || !(m.pose_hz > 0) || !(m.image_hz > 0) || !(m.detector_hz > 0)) {
    bad("mission rates and duration must be positive");
  }
  return m;
}

WorldModel load_world(const std::filesystem::path& file) { return world_from_json(read_json_file(file)); }

MissionSpec load_mission(const std::filesystem::path& file) { return mission_from_json(read_json_file(file)); }

std::string pose_topic(const std::string& robot_id) { return "/" + robot_id + "/pose"; }
std::string image_topic(const std::string& robot_id) { return "/" + robot_id + "/image"; }
std::string detection_topic(const std::string& robot_id) { return "/" + robot_id + "/detections"; }

Bytes encode_message(const Message& m) {
  Encoder e;
  e.str(m.topic).i64(m.stamp).u64(m.payload.index());
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        e.str(p.robot_id);
        if constexpr (std::is_same_v<T, PoseMsg>) {
          e.f64(p.pose.x).f64(p.pose.y).f64(p.pose.z).f64(p.pose.yaw);
        } else if constexpr (std::is_same_v<T, DetectionMsg>) {
          e.u64(p.object_index).str(p.label).f64(p.position.x).f64(p.position.y).f64(p.position.z).f64(p.confidence);
        } else {
          e.u64(p.size_bytes);
        }
      },
      m.payload);
  return std::move(e).take();
}

Message decode_message(ByteView bytes) {
  Decoder d(bytes);
  Message m;
  m.topic = d.str();
  m.stamp = d.i64();
  const auto kind = d.u64();
  const auto robot = d.str();
  if (kind == 0) {
    PoseMsg p{robot, {}};
    p.pose.x = d.f64();
    p.pose.y = d.f64();
    p.pose.z = d.f64();
    p.pose.yaw = d.f64();
    m.payload = p;
  } else if (kind == 1) {
    DetectionMsg p;
    p.robot_id = robot;
    p.object_index = d.u64();
    p.label = d.str();
    p.position.x = d.f64();
    p.position.y = d.f64();
    p.position.z = d.f64();
    p.confidence = d.f64();
    m.payload = p;
  } else if (kind == 2) {
    m.payload = ImageStubMsg{robot, d.u64()};
  } else {
    throw Error(ErrorCode::decode_error, "unknown message kind " + std::to_string(kind));
  }
  d.expect_done();
  return m;
}

nlohmann::json to_json(const Message& m) {
  nlohmann::json j{{"topic", m.topic}, {"stamp", std::to_string(m.stamp)}};
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        j["robot_id"] = p.robot_id;
        if constexpr (std::is_same_v<T, PoseMsg>) {
          j["type"] = "pose";
          j["x"] = p.pose.x;
          j["y"] = p.pose.y;
          j["z"] = p.pose.z;
          j["yaw"] = p.pose.yaw;
        } else if constexpr (std::is_same_v<T, DetectionMsg>) {
          j["type"] = "detection";
          j["object_index"] = p.object_index;
          j["label"] = p.label;
          j["x"] = p.position.x;
          j["y"] = p.position.y;
          j["z"] = p.position.z;
          j["confidence"] = p.confidence;
        } else {
          j["type"] = "image";
          j["size_bytes"] = p.size_bytes;
        }
      },
      m.payload);
  return j;
}

TopicBus::SubscriptionId TopicBus::subscribe(const std::string& topic, Handler handler) {
  const auto id = next_++;
  subs_.emplace(id, Entry{topic, std::move(handler)});
  return id;
}

TopicBus::SubscriptionId TopicBus::subscribe_all(Handler handler) {
  const auto id = next_++;
  subs_.emplace(id, Entry{std::nullopt, std::move(handler)});
  return id;
}

void TopicBus::unsubscribe(SubscriptionId id) { subs_.erase(id); }

void TopicBus::publish(const Message& m) {
  ++published_;
  // Snapshot the ids so handlers can unsubscribe safely.
  std::vector<SubscriptionId> ids;
  for (const auto& [id, e] : subs_) {
    if (!e.topic || *e.topic == m.topic) ids.push_back(id);
  }
  for (auto id : ids) {
    auto it = subs_.find(id);
    if (it == subs_.end()) continue;
    auto handler = it->second.handler;
    handler(m);
  }
}

double detection_confidence(std::uint64_t seed, const std::string& robot_id, std::uint64_t object_index) {
  Encoder e;
  e.u64(seed).str(robot_id).u64(object_index);
  const auto h = crypto::sha256(e.data());
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | h[static_cast<std::size_t>(i)];
  return 0.5 + 0.5 * static_cast<double>(v >> 11) * 0x1.0p-53;
}

bool in_view(const Pose& pose, const SensorSpec& sensor, const Vec3& object) {
  const double dx = object.x - pose.x;
  const double dy = object.y - pose.y;
  const double dz = object.z - pose.z;
  if (std::sqrt(dx * dx + dy * dy + dz * dz) > sensor.range) return false;
  if (dx == 0 && dy == 0) return true;  // directly above or below
  const double bearing = std::atan2(dy, dx);
  return std::abs(wrap_angle(bearing - pose.yaw)) <= sensor.fov / 2;
}

Simulation::Simulation(WorldModel world, MissionSpec mission, TopicBus& bus)
    : world_(std::move(world)), mission_(std::move(mission)), bus_(bus) {
  world_.validate();
  tick_ns_ = std::llround(1e9 / mission_.tick_hz);
  end_ns_ = std::llround(mission_.duration_s * 1e9);
  std::set<std::string> ids;
  for (const auto& spec : mission_.robots) {
    if (spec.id.empty() || !ids.insert(spec.id).second) bad("robot ids must be unique and non-empty");
    if (!(spec.speed > 0)) bad("robot speed must be positive");
    RobotState r{spec, spec.start, {}};
    if (spec.kind == RobotKind::ground) r.pose.z = 0;
    if (spec.kind == RobotKind::aerial) r.pose.z = std::clamp(r.pose.z, kAerialMinZ, kAerialMaxZ);
    for (const auto& w : spec.waypoints) r.queue.push_back({w, {}, false});
    robots_.push_back(std::move(r));
    detected_[spec.id];
  }
}

const RobotState& Simulation::robot(const std::string& id) const {
  for (const auto& r : robots_) {
    if (r.spec.id == id) return r;
  }
  throw Error(ErrorCode::invalid_argument, "unknown robot " + id);
}

RobotState& Simulation::mutable_robot(const std::string& id) { return const_cast<RobotState&>(robot(id)); }

void Simulation::move(RobotState& r, double dt) {
  double budget = r.spec.speed * dt;
  while (!r.queue.empty()) {
    auto target = r.queue.front().position;
    if (r.spec.kind == RobotKind::ground) target.z = 0;
    if (r.spec.kind == RobotKind::aerial) target.z = std::clamp(target.z, kAerialMinZ, kAerialMaxZ);
    target.x = std::clamp(target.x, 0.0, world_.width);
    target.y = std::clamp(target.y, 0.0, world_.depth);
    const double dx = target.x - r.pose.x;
    const double dy = target.y - r.pose.y;
    const double dz = target.z - r.pose.z;
    const double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
    if (dx != 0 || dy != 0) r.pose.yaw = std::atan2(dy, dx);
    const double travel = std::min(budget, dist);
    if (dist > 0) {
      r.pose.x += dx / dist * travel;
      r.pose.y += dy / dist * travel;
      r.pose.z += dz / dist * travel;
    }
    budget -= travel;
    if (dist - travel > kArrivalTolerance) break;
    const auto reached = r.queue.front();
    r.queue.pop_front();
    if (reached.last_of_command && command_done_) command_done_(r.spec.id, reached.command_id);
    if (budget <= 0) break;
  }
}

void Simulation::step(double dt) {
  if (!(dt > 0)) bad("step needs dt > 0");
  for (auto& r : robots_) move(r, dt);
}

std::vector<DetectionMsg> Simulation::sense(const std::string& robot_id) {
  const auto& r = robot(robot_id);
  std::vector<DetectionMsg> out;
  for (std::size_t i = 0; i < world_.objects.size(); ++i) {
    const auto& o = world_.objects[i];
    const double dx = o.position.x - r.pose.x;
    const double dy = o.position.y - r.pose.y;
    const double dz = o.position.z - r.pose.z;
    auto& armed = in_range_[{robot_id, i}];
    if (std::sqrt(dx * dx + dy * dy + dz * dz) > r.spec.sensor.range) {
      armed = false;
      continue;
    }
    if (armed || !in_view(r.pose, r.spec.sensor, o.position)) continue;
    armed = true;
    detected_[robot_id].insert(i);
    out.push_back({robot_id, i, o.label, o.position, detection_confidence(mission_.seed, robot_id, i)});
  }
  return out;
}

bool Simulation::due(double rate_hz) const {
  if (ticks_ == 0) return true;
  const double ratio = rate_hz / mission_.tick_hz;
  const auto k = static_cast<double>(ticks_);
  return std::floor(k * ratio + 1e-9) > std::floor((k - 1) * ratio + 1e-9);
}

void Simulation::tick() {
  const bool pose_due = due(mission_.pose_hz);
  const bool image_due = due(mission_.image_hz);
  const bool detect_due = due(mission_.detector_hz);
  for (const auto& r : robots_) {
    const auto& id = r.spec.id;
    if (pose_due) {
      trajectory_.push_back({id, now_ns_, r.pose});
      bus_.publish({pose_topic(id), now_ns_, PoseMsg{id, r.pose}});
    }
    if (image_due) bus_.publish({image_topic(id), now_ns_, ImageStubMsg{id, 640 * 480 * 3}});
    if (detect_due) {
      for (auto& d : sense(id)) bus_.publish({detection_topic(id), now_ns_, std::move(d)});
    }
  }
  ++ticks_;
  // Stamps are derived from the tick count so rates that divide the tick
  // rate land on exact nanosecond multiples.
  const auto next = std::llround(static_cast<double>(ticks_) * 1e9 / mission_.tick_hz);
  step(static_cast<double>(next - now_ns_) * 1e-9);
  now_ns_ = next;
}

void Simulation::run_until(std::int64_t until_ns) {
  while (now_ns_ < until_ns) tick();
}

void Simulation::enqueue_command(const std::string& robot_id, const std::string& command_id,
                                 const std::vector<Vec3>& points) {
  if (points.empty()) bad("a command needs at least one waypoint");
  auto& r = mutable_robot(robot_id);
  auto pos = std::find_if(r.queue.begin(), r.queue.end(), [](const Waypoint& w) { return w.command_id.empty(); });
  std::vector<Waypoint> inserted;
  for (std::size_t i = 0; i < points.size(); ++i) {
    inserted.push_back({points[i], command_id, i + 1 == points.size()});
  }
  r.queue.insert(pos, inserted.begin(), inserted.end());
}

std::string Simulation::trajectory_csv() const {
  std::ostringstream out;
  out << "robot_id,stamp,x,y,z\n";
  out.precision(17);
  for (const auto& row : trajectory_) {
    out << row.robot_id << ',' << row.stamp << ',' << row.pose.x << ',' << row.pose.y << ',' << row.pose.z << '\n';
  }
  return out.str();
}

}  // namespace fleetledger::sim
