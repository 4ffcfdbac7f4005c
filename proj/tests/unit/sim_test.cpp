#include <doctest.h>

#include <cmath>
#include <random>

#include "coverage_oracle.hpp"
#include "fleetledger/error.hpp"
#include "fleetledger/sim.hpp"

using namespace fleetledger;
using namespace fleetledger::sim;

namespace {

MissionSpec single_robot(RobotKind kind, Pose start, std::vector<Vec3> waypoints, double speed = 0.5) {
  MissionSpec m;
  m.duration_s = 10;
  RobotSpec r;
  r.id = "r1";
  r.kind = kind;
  r.speed = speed;
  r.start = start;
  r.waypoints = std::move(waypoints);
  m.robots = {r};
  return m;
}

struct Run {
  std::string csv;
  std::vector<std::tuple<std::string, std::int64_t, std::uint64_t, double>> detections;
};

Run run_default_mission() {
  TopicBus bus;
  auto world = WorldModel::default_world();
  Simulation s(world, MissionSpec::default_mission(world), bus);
  Run run;
  bus.subscribe_all([&](const Message& m) {
    if (const auto* d = std::get_if<DetectionMsg>(&m.payload)) {
      run.detections.emplace_back(d->robot_id, m.stamp, d->object_index, d->confidence);
    }
  });
  s.run_until(s.end_ns());
  run.csv = s.trajectory_csv();
  return run;
}

}  // namespace

TEST_CASE("a robot moves toward its waypoint at constant speed") {
  TopicBus bus;
  Simulation s(WorldModel::default_world(), single_robot(RobotKind::ground, {}, {{1, 0, 0}}), bus);
  s.step(1.0);
  const auto& p = s.robot("r1").pose;
  CHECK(p.x == doctest::Approx(0.5));
  CHECK(p.y == 0);
  CHECK(p.z == 0);
  s.step(1.0);
  CHECK(s.robot("r1").pose.x == doctest::Approx(1.0));
  CHECK(s.robot("r1").queue.empty());
}

TEST_CASE("an empty queue leaves the pose unchanged") {
  TopicBus bus;
  Simulation s(WorldModel::default_world(), single_robot(RobotKind::ground, {2, 2, 0, 0.3}, {}), bus);
  s.step(3.0);
  CHECK(s.robot("r1").pose == Pose{2, 2, 0, 0.3});
  CHECK_THROWS_AS(s.step(0), Error);
}

TEST_CASE("waypoints within arrival tolerance pop and the leftover budget carries on") {
  TopicBus bus;
  Simulation s(WorldModel::default_world(), single_robot(RobotKind::ground, {}, {{0.04, 0, 0}, {0.04, 1, 0}}), bus);
  s.step(0.1);  // 5 cm of travel: reaches the first point, 1 cm toward the second
  CHECK(s.robot("r1").queue.size() == 1);
  CHECK(s.robot("r1").pose.y == doctest::Approx(0.01));
}

TEST_CASE("robots respect altitude limits and room bounds") {
  TopicBus bus;
  auto m = single_robot(RobotKind::aerial, {1, 1, 0, 0}, {{50, -3, 9}});
  m.robots[0].speed = 2;
  Simulation s(WorldModel::default_world(), m, bus);
  CHECK(s.robot("r1").pose.z == doctest::Approx(0.5));
  s.run_until(s.end_ns());
  const auto& p = s.robot("r1").pose;
  // Clamped target is the (width, 0, 3) corner; arrival pops within 5 cm.
  CHECK(std::hypot(p.x - s.world().width, p.y, p.z - 3.0) <= 0.05);
  CHECK(p.x <= s.world().width);
  CHECK(p.z <= 3.0);

  auto g = single_robot(RobotKind::ground, {1, 1, 0.7, 0}, {{2, 2, 1}});
  Simulation sg(WorldModel::default_world(), g, bus);
  sg.run_until(sg.end_ns());
  CHECK(sg.robot("r1").pose.z == 0);
}

TEST_CASE("the default mission stays inside the room") {
  TopicBus bus;
  auto world = WorldModel::default_world();
  CHECK(world.area() == doctest::Approx(40).epsilon(0.01));
  Simulation s(world, MissionSpec::default_mission(world), bus);
  s.run_until(s.end_ns());
  REQUIRE(!s.trajectory().empty());
  for (const auto& row : s.trajectory()) {
    CHECK(world.contains(row.pose.x, row.pose.y));
    if (row.robot_id == "ground") {
      CHECK(row.pose.z == 0);
    } else {
      CHECK(row.pose.z >= 0.5);
      CHECK(row.pose.z <= 3.0);
    }
  }
}

TEST_CASE("the same seed and spec replay identically") {
  auto a = run_default_mission();
  auto b = run_default_mission();
  CHECK(a.csv == b.csv);
  CHECK(a.detections == b.detections);
  CHECK(!a.detections.empty());
}

TEST_CASE("a 10 s run at 10 Hz publishes 100 poses with increasing stamps") {
  TopicBus bus;
  auto m = single_robot(RobotKind::ground, {1, 1, 0, 0}, {{4, 4, 0}});
  m.duration_s = 10;
  Simulation s(WorldModel::default_world(), m, bus);
  std::vector<std::int64_t> stamps;
  std::size_t images = 0;
  bus.subscribe(pose_topic("r1"), [&](const Message& msg) { stamps.push_back(msg.stamp); });
  bus.subscribe(image_topic("r1"), [&](const Message& msg) {
    ++images;
    CHECK(std::get<ImageStubMsg>(msg.payload).size_bytes > 0);
  });
  s.run_until(s.end_ns());
  CHECK(stamps.size() >= 99);
  CHECK(stamps.size() <= 101);
  CHECK(images >= 299);
  CHECK(images <= 301);
  for (std::size_t i = 1; i < stamps.size(); ++i) CHECK(stamps[i] > stamps[i - 1]);
  CHECK(stamps[1] - stamps[0] == 100'000'000);
}

TEST_CASE("the bus preserves per-publisher order with two interleaved publishers") {
  TopicBus bus;
  std::mt19937_64 rng(7);
  std::vector<std::pair<std::string, std::int64_t>> published, received_all, received_a;
  bus.subscribe_all([&](const Message& m) { received_all.emplace_back(std::get<PoseMsg>(m.payload).robot_id, m.stamp); });
  bus.subscribe("/shared", [&](const Message& m) {
    if (std::get<PoseMsg>(m.payload).robot_id == "a") received_a.emplace_back("a", m.stamp);
  });
  std::int64_t seq_a = 0, seq_b = 0;
  for (int i = 0; i < 2000; ++i) {
    const bool from_a = rng() % 2 == 0;
    const std::string id = from_a ? "a" : "b";
    const auto seq = from_a ? seq_a++ : seq_b++;
    const std::string topic = rng() % 3 == 0 ? "/other" : "/shared";
    published.emplace_back(id, seq);
    bus.publish({topic, seq, PoseMsg{id, {}}});
  }
  CHECK(received_all == published);
  CHECK(bus.published() == 2000);
  // Per publisher, the sequence numbers seen on /shared strictly increase.
  for (std::size_t i = 1; i < received_a.size(); ++i) CHECK(received_a[i].second > received_a[i - 1].second);
}

TEST_CASE("a handler can unsubscribe itself during publish") {
  TopicBus bus;
  int calls = 0;
  TopicBus::SubscriptionId id = 0;
  id = bus.subscribe("/t", [&](const Message&) {
    ++calls;
    bus.unsubscribe(id);
  });
  bus.publish({"/t", 0, PoseMsg{}});
  bus.publish({"/t", 1, PoseMsg{}});
  CHECK(calls == 1);
}

TEST_CASE("in_view agrees with a dot-product model on random poses") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> coord(0, 6.32), height(0, 3), angle(-M_PI, M_PI), fov(0.2, 2 * M_PI / 3),
      range(0.5, 3.5);
  int seen = 0;
  for (int i = 0; i < 20000; ++i) {
    Pose p{coord(rng), coord(rng), height(rng), angle(rng)};
    SensorSpec s{range(rng), fov(rng)};
    Vec3 o{coord(rng), coord(rng), height(rng)};
    const bool expected = oracle::sees(p.x, p.y, p.z, p.yaw, s.range, s.fov, o);
    REQUIRE(in_view(p, s, o) == expected);
    seen += expected;
  }
  CHECK(seen > 100);
}

TEST_CASE("objects ahead are seen and objects behind are not") {
  SensorSpec s{2.0, M_PI / 2};
  CHECK(in_view({0, 0, 0, 0}, s, {0.5, 0, 0}));
  CHECK_FALSE(in_view({0, 0, 0, 0}, s, {-0.5, 0, 0}));
  CHECK_FALSE(in_view({0, 0, 0, 0}, s, {2.5, 0, 0}));
}

TEST_CASE("detections need the object to leave range before firing again") {
  TopicBus bus;
  WorldModel world;
  world.objects = {{"cup", {2.0, 1.0, 0.0}}};
  auto m = single_robot(RobotKind::ground, {1.5, 1.0, 0, 0}, {});
  Simulation s(world, m, bus);
  auto first = s.sense("r1");
  REQUIRE(first.size() == 1);
  CHECK(first[0].label == "cup");
  CHECK(first[0].confidence >= 0.5);
  CHECK(first[0].confidence < 1.0);
  CHECK(s.sense("r1").empty());

  // Turning away while still in range does not re-arm.
  s.enqueue_command("r1", "c1", {{1.0, 1.0, 0}});
  s.step(2.0);
  CHECK(s.sense("r1").empty());
  s.enqueue_command("r1", "c2", {{1.5, 1.0, 0}});
  s.step(2.0);
  CHECK(s.sense("r1").empty());

  // Leaving range re-arms.
  s.enqueue_command("r1", "c3", {{5.0, 1.0, 0}, {5.5, 1.0, 0}, {1.0, 1.0, 0}, {1.5, 1.0, 0}});
  s.step(8.0);
  CHECK(s.robot("r1").pose.x == doctest::Approx(5.5));
  CHECK(s.sense("r1").empty());
  s.step(30.0);
  CHECK(s.robot("r1").pose.x == doctest::Approx(1.5).epsilon(0.05));
  CHECK(s.sense("r1").size() == 1);
}

TEST_CASE("confidence is deterministic per seed, robot and object") {
  const double c = detection_confidence(1, "ground", 3);
  CHECK(c == detection_confidence(1, "ground", 3));
  CHECK(c != detection_confidence(2, "ground", 3));
  CHECK(c != detection_confidence(1, "aerial", 3));
  for (std::uint64_t i = 0; i < 500; ++i) {
    const double v = detection_confidence(i, "r", i * 7);
    CHECK(v >= 0.5);
    CHECK(v < 1.0);
  }
}

TEST_CASE("the default mission detects every shelf object and only visible ones") {
  TopicBus bus;
  auto world = WorldModel::default_world();
  auto mission = MissionSpec::default_mission(world);
  Simulation s(world, mission, bus);
  std::map<std::string, Pose> last_pose;
  bus.subscribe_all([&](const Message& m) {
    if (const auto* p = std::get_if<PoseMsg>(&m.payload)) last_pose[p->robot_id] = p->pose;
    if (const auto* d = std::get_if<DetectionMsg>(&m.payload)) {
      // Detections share a tick with a pose message, so last_pose is the pose they were sensed from.
      const auto& pose = last_pose.at(d->robot_id);
      const auto& sensor = s.robot(d->robot_id).spec.sensor;
      CHECK(oracle::sees(pose.x, pose.y, pose.z, pose.yaw, sensor.range, sensor.fov, world.objects[d->object_index].position));
    }
  });
  s.run_until(s.end_ns());

  const auto coverage = oracle::path_coverage(world, mission);
  std::set<std::uint64_t> oracle_union, sim_union;
  for (const auto& [robot, objs] : coverage) oracle_union.insert(objs.begin(), objs.end());
  for (const auto& [robot, objs] : s.detected()) {
    sim_union.insert(objs.begin(), objs.end());
    // Sampled detection never sees more than continuous geometry allows.
    for (auto o : objs) CHECK(coverage.at(robot).count(o) == 1);
  }
  for (const auto& shelf : world.shelves) {
    for (auto o : shelf.objects) {
      CHECK(oracle_union.count(o) == 1);
      CHECK(sim_union.count(o) == 1);
    }
  }
  CHECK(s.detected().at("ground").size() > 0);
  CHECK(s.detected().at("aerial").size() > 0);
}

TEST_CASE("command waypoints run before the rest of the mission and report completion") {
  TopicBus bus;
  auto m = single_robot(RobotKind::ground, {1, 1, 0, 0}, {{5, 1, 0}}, 1.0);
  Simulation s(WorldModel::default_world(), m, bus);
  std::vector<std::string> done;
  s.on_command_done([&](const std::string& robot, const std::string& cmd) { done.push_back(robot + ":" + cmd); });
  s.enqueue_command("r1", "cmd-1", {{1, 2, 0}, {2, 2, 0}});
  s.enqueue_command("r1", "cmd-2", {{2, 3, 0}});
  REQUIRE(s.robot("r1").queue.size() == 4);
  CHECK(s.robot("r1").queue[0].command_id == "cmd-1");
  CHECK(s.robot("r1").queue[2].command_id == "cmd-2");
  CHECK(s.robot("r1").queue[3].command_id.empty());
  s.run_until(s.end_ns());
  CHECK(done == std::vector<std::string>{"r1:cmd-1", "r1:cmd-2"});
  CHECK(s.robot("r1").pose.x == doctest::Approx(5).epsilon(0.02));
  CHECK_THROWS_AS(s.enqueue_command("r1", "empty", {}), Error);
  CHECK_THROWS_AS(s.enqueue_command("nobody", "x", {{1, 1, 0}}), Error);
}

TEST_CASE("messages encode and decode losslessly") {
  Message pose{"/ground/pose", 123, PoseMsg{"ground", {1.5, 2.25, 0, -0.5}}};
  Message det{"/aerial/detections", 456, DetectionMsg{"aerial", 4, "cup", {1, 2, 0.3}, 0.75}};
  Message img{"/ground/image", 789, ImageStubMsg{"ground", 921600}};
  for (const auto& m : {pose, det, img}) {
    auto back = decode_message(encode_message(m));
    CHECK(back.topic == m.topic);
    CHECK(back.stamp == m.stamp);
    CHECK(encode_message(back) == encode_message(m));
  }
  CHECK(to_json(det)["stamp"] == "456");
}

TEST_CASE("world and mission specs round-trip through JSON and reject bad input") {
  auto world = WorldModel::default_world();
  auto w2 = world_from_json(to_json(world));
  CHECK(to_json(w2) == to_json(world));
  auto mission = MissionSpec::default_mission(world);
  CHECK(to_json(mission_from_json(to_json(mission))) == to_json(mission));

  auto bad_world = to_json(world);
  bad_world["objects"][0]["position"] = {99, 1, 0};
  CHECK_THROWS_AS(world_from_json(bad_world), Error);
  CHECK_THROWS_AS(world_from_json(nlohmann::json{{"width", 5}}), Error);

  auto bad_mission = to_json(mission);
  bad_mission["robots"][0]["kind"] = "boat";
  CHECK_THROWS_AS(mission_from_json(bad_mission), Error);
  auto dup = to_json(mission);
  dup["robots"][1]["id"] = "ground";
  TopicBus bus;
  CHECK_THROWS_AS(Simulation(world, mission_from_json(dup), bus), Error);
}

TEST_CASE("trajectory export has the documented header") {
  TopicBus bus;
  Simulation s(WorldModel::default_world(), single_robot(RobotKind::ground, {1, 1, 0, 0}, {{2, 1, 0}}), bus);
  s.run_until(200'000'000);
  const auto csv = s.trajectory_csv();
  CHECK(csv.rfind("robot_id,stamp,x,y,z\n", 0) == 0);
  CHECK(csv.find("r1,0,1,1,0\n") != std::string::npos);
  CHECK(s.trajectory().size() == 2);
}
