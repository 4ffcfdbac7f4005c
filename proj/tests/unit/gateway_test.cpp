#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <chrono>
#include <future>
#include <thread>

#include <nlohmann/json.hpp>

#include "fleetledger/contracts.hpp"
#include "fleetledger/crypto.hpp"
#include "fleetledger/gateway.hpp"
#include "fleetledger/http_api.hpp"
#include "net_fixture.hpp"

using namespace fleetledger;
using namespace fleetledger::gateway;
using nlohmann::json;

namespace {

using namespace std::chrono_literals;

/// Default network on a real clock, served over TCP on a free port.
struct LiveNet {
  explicit LiveNet(ServerOptions options = {}) {
    ex.run_sync([&] {
      net = Network::bring_up(ex, NetworkSpec::default_spec());
      net->deploy_channel("mychannel", {"Org1", "Org2"}, fixtures::fast_orderer(), contracts::standard_contracts());
      net->deploy_channel("empty", {"Org1", "Org2"}, fixtures::fast_orderer(), contracts::standard_contracts());
    });
    options.port = 0;
    server = std::make_unique<GatewayServer>(*net, options);
    server->attach_bus(bus);
    server->start();
  }
  ~LiveNet() {
    server->stop();
    ex.run_sync([&] { net.reset(); });
    ex.stop();
  }

  Identity issue(const std::string& org, const std::string& subject) {
    return ex.run_sync([&] { return net->issue_identity(org, subject, Role::client); });
  }

  RealtimeExecutor ex;
  sim::TopicBus bus;
  std::unique_ptr<Network> net;
  std::unique_ptr<GatewayServer> server;
};

template <class P>
bool eventually(P pred, std::chrono::milliseconds limit = 5000ms) {
  const auto end = std::chrono::steady_clock::now() + limit;
  while (std::chrono::steady_clock::now() < end) {
    if (pred()) return true;
    std::this_thread::sleep_for(5ms);
  }
  return pred();
}

std::vector<std::string> path_args(const std::string& robot, int seq, const std::string& org) {
  return {robot, std::to_string(seq), "1.5", "2", "0", "0", std::to_string(seq * 5'000'000'000LL), org};
}

}  // namespace

TEST_CASE("a wallet identity opens a session and a foreign CA is refused") {
  LiveNet live;
  RealtimeExecutor cex;
  auto good = GatewayClient::connect("127.0.0.1", live.server->port(), live.issue("Org1", "robot.ground"), cex);
  CHECK(good->connected());
  CHECK(eventually([&] { return live.server->session_count() == 1; }));

  auto rogue_ca = CertificateAuthority::create("Org1");
  auto forged = rogue_ca.issue("robot.ground", Role::client);
  try {
    GatewayClient::connect("127.0.0.1", live.server->port(), forged, cex);
    FAIL("forged certificate was accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::not_a_member);
  }
  CHECK(live.server->refused() == 1);
  CHECK(eventually([&] { return live.server->session_count() == 1; }));
}

TEST_CASE("requests before the hello are refused") {
  LiveNet live;
  auto sock = Socket::connect("127.0.0.1", live.server->port());
  Encoder e;
  e.str("mychannel");
  sock.send({Kind::channel, 1, std::move(e).take()});
  auto reply = sock.receive(kDefaultMaxFrame);
  REQUIRE(reply);
  const auto r = Response::deserialize(reply->body);
  CHECK_FALSE(r.ok);
  CHECK(r.code == ErrorCode::not_a_member);
  CHECK_FALSE(sock.receive(kDefaultMaxFrame));
}

TEST_CASE("a frame above the limit is a protocol error and closes the connection") {
  ServerOptions options;
  options.max_frame = 4096;
  LiveNet live(options);
  auto sock = Socket::connect("127.0.0.1", live.server->port());
  sock.send({Kind::hello, 1, Bytes(8192, 0x5a)});
  auto reply = sock.receive(kDefaultMaxFrame);
  REQUIRE(reply);
  const auto r = Response::deserialize(reply->body);
  CHECK_FALSE(r.ok);
  CHECK(r.code == ErrorCode::protocol_error);
  CHECK_FALSE(sock.receive(kDefaultMaxFrame));
}

TEST_CASE("frames round-trip and reject truncation") {
  Frame f{Kind::submit, 42, to_bytes("payload")};
  const auto wire = encode_frame(f);
  REQUIRE(wire.size() == 4 + 1 + 8 + 8 + 7);
  const auto back = decode_frame(ByteView(wire).subspan(4));
  CHECK(back.kind == Kind::submit);
  CHECK(back.id == 42);
  CHECK(back.body == f.body);
  CHECK_THROWS_AS(decode_frame(ByteView(wire).subspan(4, 10)), Error);

  auto failure = Response::failure(ErrorCode::unknown_chaincode, "nope");
  auto parsed = Response::deserialize(failure.serialize());
  CHECK_FALSE(parsed.ok);
  CHECK(parsed.code == ErrorCode::unknown_chaincode);
  CHECK(parsed.error == "nope");
}

TEST_CASE("submit and evaluate over the gateway") {
  LiveNet live;
  RealtimeExecutor cex;
  auto client = GatewayClient::connect("127.0.0.1", live.server->port(), live.issue("Org1", "robot.ground"), cex);
  client->connect_to_channel("mychannel");
  auto path = client->load_chaincode("path");

  const auto out = path.submit("CreateAsset", path_args("ground", 1, "Org1"));
  CHECK(out.error == "");
  CHECK(out.ordered);
  REQUIRE(out.code);
  CHECK(*out.code == ValidationCode::valid);
  CHECK(out.commit_time >= out.submit_time);

  const auto dup = path.submit("CreateAsset", path_args("ground", 1, "Org1"));
  CHECK_FALSE(dup.code.has_value());
  CHECK(dup.error.find("already exists") != std::string::npos);

  const auto all = path.evaluate("ReadAllAssets", {});
  REQUIRE(all.ok);
  const auto assets = json::parse(to_string(all.payload));
  REQUIRE(assets.size() == 1);
  CHECK(assets[0]["asset_id"] == "path~ground~" + contracts::format_seq(1));

  // The same state is visible from an Org2 session.
  auto other = GatewayClient::connect("127.0.0.1", live.server->port(), live.issue("Org2", "robot.aerial"), cex);
  other->connect_to_channel("mychannel");
  const auto seen = other->load_chaincode("path").evaluate("AssetExists", {"path~ground~" + contracts::format_seq(1)});
  REQUIRE(seen.ok);
  CHECK(to_string(seen.payload) == "true");
}

TEST_CASE("gateway errors map to error codes") {
  LiveNet live;
  RealtimeExecutor cex;
  auto client = GatewayClient::connect("127.0.0.1", live.server->port(), live.issue("Org1", "ops"), cex);
  try {
    client->connect_to_channel("nochannel");
    FAIL("unknown channel accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::unknown_channel);
  }
  client->connect_to_channel("mychannel");
  try {
    client->load_chaincode("inventory");
    FAIL("unknown chaincode accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::unknown_chaincode);
  }
}

TEST_CASE("admins create channels and run the chaincode lifecycle over the gateway") {
  LiveNet live;
  RealtimeExecutor cex;
  auto admin1 = GatewayClient::connect("127.0.0.1", live.server->port(),
                                       live.ex.run_sync([&] { return live.net->issue_identity("Org1", "admin.org1", Role::admin); }), cex);
  auto admin2 = GatewayClient::connect("127.0.0.1", live.server->port(),
                                       live.ex.run_sync([&] { return live.net->issue_identity("Org2", "admin.org2", Role::admin); }), cex);
  auto user = GatewayClient::connect("127.0.0.1", live.server->port(), live.issue("Org1", "robot.ground"), cex);

  try {
    user->create_channel("fleet", {"Org1", "Org2"}, fixtures::fast_orderer());
    FAIL("client identity created a channel");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::not_a_member);
  }
  admin1->create_channel("fleet", {"Org1", "Org2"}, fixtures::fast_orderer());
  try {
    admin2->create_channel("fleet", {"Org1", "Org2"}, fixtures::fast_orderer());
    FAIL("duplicate channel accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::duplicate_channel);
  }

  user->connect_to_channel("fleet");
  CHECK_THROWS_AS(user->load_chaincode("path"), Error);

  admin1->approve_chaincode("fleet", "path");
  try {
    admin1->commit_chaincode("fleet", "path");
    FAIL("commit with one of two approvals");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::insufficient_approvals);
  }
  admin2->approve_chaincode("fleet", "path");
  admin2->commit_chaincode("fleet", "path");

  auto path = user->load_chaincode("path");
  CHECK(path.submit("CreateAsset", path_args("ground", 1, "Org1")).code == ValidationCode::valid);
  try {
    admin1->approve_chaincode("fleet", "inventory");
    FAIL("approved a chaincode without a package");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::unknown_chaincode);
  }
}

TEST_CASE("deliver_from streams history then live blocks") {
  LiveNet live;
  RealtimeExecutor cex;
  auto client = GatewayClient::connect("127.0.0.1", live.server->port(), live.issue("Org1", "ops"), cex);
  client->connect_to_channel("mychannel");
  auto path = client->load_chaincode("path");
  REQUIRE(path.submit("CreateAsset", path_args("ground", 1, "Org1")).code == ValidationCode::valid);

  std::mutex mu;
  std::vector<std::uint64_t> numbers;
  client->deliver_from(0, [&](const Block& b) {
    std::lock_guard lock(mu);
    numbers.push_back(b.header.number);
  });
  const auto height = live.ex.run_sync([&] { return live.net->orderer().height("mychannel"); });
  CHECK(eventually([&] {
    std::lock_guard lock(mu);
    return numbers.size() == height;
  }));
  REQUIRE(path.submit("CreateAsset", path_args("ground", 2, "Org1")).code == ValidationCode::valid);
  CHECK(eventually([&] {
    std::lock_guard lock(mu);
    return numbers.size() == height + 1;
  }));
  std::lock_guard lock(mu);
  for (std::size_t i = 0; i < numbers.size(); ++i) CHECK(numbers[i] == i);
}

TEST_CASE("simulator topics are relayed to subscribed clients") {
  LiveNet live;
  RealtimeExecutor cex;
  auto client = GatewayClient::connect("127.0.0.1", live.server->port(), live.issue("Org1", "recorder.ground"), cex);
  std::mutex mu;
  std::vector<sim::Message> got;
  client->subscribe_topic(sim::pose_topic("ground"), [&](const sim::Message& m) {
    std::lock_guard lock(mu);
    got.push_back(m);
  });
  live.ex.run_sync([&] {
    for (int i = 0; i < 5; ++i) {
      live.bus.publish({sim::pose_topic("ground"), i * 100'000'000LL, sim::PoseMsg{"ground", {0.1 * i, 1, 0, 0}}});
      live.bus.publish({sim::pose_topic("aerial"), i * 100'000'000LL, sim::PoseMsg{"aerial", {1, 1, 1.5, 0}}});
    }
  });
  CHECK(eventually([&] {
    std::lock_guard lock(mu);
    return got.size() == 5;
  }));
  std::this_thread::sleep_for(50ms);
  std::lock_guard lock(mu);
  REQUIRE(got.size() == 5);
  for (int i = 0; i < 5; ++i) {
    CHECK(got[i].stamp == i * 100'000'000LL);
    CHECK(std::get<sim::PoseMsg>(got[i].payload).robot_id == "ground");
  }
}

TEST_CASE("a dropped gateway fails outstanding work") {
  auto live = std::make_unique<LiveNet>();
  RealtimeExecutor cex;
  auto client = GatewayClient::connect("127.0.0.1", live->server->port(), live->issue("Org1", "ops"), cex);
  client->connect_to_channel("mychannel");
  auto path = client->load_chaincode("path");
  live->server->stop();
  CHECK(eventually([&] { return !client->connected(); }));
  const auto out = path.submit("CreateAsset", path_args("ground", 1, "Org1"));
  CHECK_FALSE(out.code.has_value());
  CHECK(out.error != "");
}

namespace {

struct LiveHttp {
  LiveHttp() : backend(*live.net, live.ex.run_sync([&] { return live.net->gateway_identity(); }), &live.bus) {
    options.port = 0;
    options.robots = {"ground", "aerial"};
    options.world = json{{"bounds", {10, 8, 3}}};
    options.keepalive = 200ms;
    start();
  }
  void start() {
    api = std::make_unique<HttpApi>(backend, options);
    api->start();
  }
  void restart() {
    api->stop();
    api.reset();
    start();
  }
  httplib::Client client() {
    httplib::Client c("127.0.0.1", api->port());
    c.set_read_timeout(10, 0);
    return c;
  }
  std::pair<int, std::string> get(const std::string& path) {
    auto c = client();
    auto r = c.Get(path);
    REQUIRE(r);
    return {r->status, r->body};
  }
  std::pair<int, std::string> post(const json& body) {
    auto c = client();
    auto r = c.Post("/api/commands", body.dump(), "application/json");
    REQUIRE(r);
    return {r->status, r->body};
  }

  LiveNet live;
  NetworkBackend backend;
  HttpOptions options;
  std::unique_ptr<HttpApi> api;
};

void seed_mission_assets(LiveHttp& h) {
  RealtimeExecutor cex;
  auto ground = GatewayClient::connect("127.0.0.1", h.live.server->port(), h.live.issue("Org1", "robot.ground"), cex);
  ground->connect_to_channel("mychannel");
  auto path = ground->load_chaincode("path");
  for (int seq = 1; seq <= 3; ++seq) {
    REQUIRE(path.submit("CreateAsset", path_args("ground", seq, "Org1")).code == ValidationCode::valid);
  }
  auto object = ground->load_chaincode("object");
  REQUIRE(object.submit("CreateAsset", {"cup", "ground", "1", "1", "1.6", "0.8", "0.75", "5000000000", "Org1"}).code ==
          ValidationCode::valid);
}

}  // namespace

TEST_CASE("http read endpoints") {
  LiveHttp h;
  auto [status, body] = h.get("/api/channels");
  CHECK(status == 200);
  CHECK(json::parse(body) == json::array({"empty", "mychannel"}));

  std::tie(status, body) = h.get("/api/channels/empty/assets");
  CHECK(status == 200);
  CHECK(body == "[]");
  std::tie(status, body) = h.get("/api/channels/nochannel/assets");
  CHECK(status == 404);
  std::tie(status, body) = h.get("/api/channels/mychannel/assets?contract=inventory");
  CHECK(status == 400);
  std::tie(status, body) = h.get("/api/channels/mychannel/assets?limit=x");
  CHECK(status == 400);

  seed_mission_assets(h);
  std::tie(status, body) = h.get("/api/channels/mychannel/assets?contract=path");
  REQUIRE(status == 200);
  const auto paths = json::parse(body);
  REQUIRE(paths.size() == 3);
  for (const auto& p : paths) CHECK(p["asset_id"].get<std::string>().rfind("path~", 0) == 0);
  std::tie(status, body) = h.get("/api/channels/mychannel/assets?limit=2");
  CHECK(json::parse(body).size() == 2);
  std::tie(status, body) = h.get("/api/channels/mychannel/assets");
  CHECK(json::parse(body).size() == 4);

  std::tie(status, body) = h.get("/api/robots/ground/trajectory");
  REQUIRE(status == 200);
  const auto traj = json::parse(body);
  REQUIRE(traj.size() == 3);
  CHECK(traj[0]["stamp"] == "5000000000");
  CHECK(traj[2]["stamp"] == "15000000000");
  CHECK(traj[0].size() == 4);
  std::tie(status, body) = h.get("/api/robots/aerial/trajectory");
  CHECK(status == 200);
  CHECK(body == "[]");
  std::tie(status, body) = h.get("/api/robots/submarine/trajectory");
  CHECK(status == 404);

  std::tie(status, body) = h.get("/api/objects");
  REQUIRE(status == 200);
  const auto objects = json::parse(body);
  REQUIRE(objects.size() == 1);
  CHECK(objects[0]["label"] == "cup");
  CHECK(objects[0]["robot_id"] == "ground");

  std::tie(status, body) = h.get("/api/world");
  CHECK(status == 200);
  std::tie(status, body) = h.get("/api/nothing");
  CHECK(status == 404);
}

TEST_CASE("http responses survive a facade restart byte for byte") {
  LiveHttp h;
  seed_mission_assets(h);
  const std::vector<std::string> paths = {"/api/channels", "/api/channels/mychannel/assets",
                                          "/api/channels/mychannel/assets?contract=object",
                                          "/api/robots/ground/trajectory", "/api/objects", "/api/world"};
  std::vector<std::pair<int, std::string>> before;
  for (const auto& p : paths) before.push_back(h.get(p));
  h.restart();
  for (std::size_t i = 0; i < paths.size(); ++i) {
    INFO(paths[i]);
    CHECK(h.get(paths[i]) == before[i]);
  }
}

TEST_CASE("command submission statuses") {
  LiveHttp h;
  CHECK(h.post({{"robot_id", "ground"}, {"waypoints", json::array()}}).first == 400);
  CHECK(h.post({{"robot_id", "ground"}}).first == 400);
  CHECK(h.post({{"robot_id", "ground"}, {"waypoints", {{1, 2}}}}).first == 400);
  CHECK(h.post({{"robot_id", "ground"}, {"waypoints", {{1, "a", 0}}}}).first == 400);
  CHECK(h.post({{"robot_id", ""}, {"waypoints", {{1, 2, 0}}}}).first == 400);
  {
    auto c = h.client();
    auto r = c.Post("/api/commands", "{not json", "application/json");
    REQUIRE(r);
    CHECK(r->status == 400);
  }
  CHECK(h.post({{"robot_id", "submarine"}, {"waypoints", {{1, 2, 0}}}}).first == 404);
  CHECK(h.post({{"robot_id", "ground"}, {"channel", "nochannel"}, {"waypoints", {{1, 2, 0}}}}).first == 404);

  auto [status, body] = h.post({{"robot_id", "ground"}, {"waypoints", {{1, 2, 0}, {3, 2, 0}}}});
  REQUIRE(status == 202);
  auto reply = json::parse(body);
  CHECK(reply["asset_id"] == contracts::command_asset_id(1));
  CHECK(reply["tx_id"].get<std::string>().size() == 64);
  std::tie(status, body) = h.post({{"robot_id", "aerial"}, {"waypoints", {{4, 4, 1.5}}}});
  REQUIRE(status == 202);
  CHECK(json::parse(body)["asset_id"] == contracts::command_asset_id(2));

  h.backend.set_down(true);
  CHECK(h.post({{"robot_id", "ground"}, {"waypoints", {{1, 2, 0}}}}).first == 503);
  CHECK(h.get("/api/channels").first == 503);
  CHECK(h.get("/api/channels/mychannel/assets").first == 503);
  h.backend.set_down(false);
  CHECK(h.get("/api/channels").first == 200);
}

TEST_CASE("preflight requests get CORS headers") {
  LiveHttp h;
  auto c = h.client();
  auto r = c.Options("/api/commands");
  REQUIRE(r);
  CHECK(r->status == 204);
  CHECK(r->get_header_value("Access-Control-Allow-Origin") == "*");
}

namespace {

/// Reads an SSE stream on a background thread until told to stop.
class SseReader {
 public:
  SseReader(std::uint16_t port, std::string path) {
    thread_ = std::thread([this, port, path] {
      httplib::Client c("127.0.0.1", port);
      c.set_read_timeout(30, 0);
      c.Get(path, [&](const char* data, std::size_t n) {
        std::lock_guard lock(mu_);
        text_.append(data, n);
        return !stop_.load();
      });
    });
  }
  ~SseReader() {
    stop_ = true;
    if (thread_.joinable()) thread_.join();
  }
  std::string text() {
    std::lock_guard lock(mu_);
    return text_;
  }
  /// Parsed `data:` payloads of events named `event`.
  std::vector<json> events(const std::string& event) {
    std::vector<json> out;
    const auto all = text();
    std::size_t pos = 0;
    for (;;) {
      const auto end = all.find("\n\n", pos);
      if (end == std::string::npos) break;
      const auto chunk = all.substr(pos, end - pos);
      pos = end + 2;
      if (chunk.find("event: " + event + "\n") == std::string::npos) continue;
      const auto d = chunk.find("data: ");
      if (d != std::string::npos) out.push_back(json::parse(chunk.substr(d + 6)));
    }
    return out;
  }

 private:
  std::thread thread_;
  std::mutex mu_;
  std::string text_;
  std::atomic<bool> stop_{false};
};

std::map<std::string, int> tx_counts(const std::vector<json>& blocks) {
  std::map<std::string, int> counts;
  for (const auto& b : blocks) {
    for (const auto& t : b["txs"]) ++counts[t["tx_id"].get<std::string>()];
  }
  return counts;
}

}  // namespace

TEST_CASE("each accepted command produces exactly one commit event") {
  LiveHttp h;
  SseReader reader(h.api->port(), "/api/events?poses=0");
  std::this_thread::sleep_for(200ms);

  std::vector<std::string> tx_ids;
  for (int i = 0; i < 6; ++i) {
    auto [status, body] = h.post({{"robot_id", i % 2 ? "aerial" : "ground"}, {"waypoints", {{1.0 + i, 2, 0}}}});
    REQUIRE(status == 202);
    tx_ids.push_back(json::parse(body)["tx_id"]);
  }
  CHECK(eventually([&] {
    const auto counts = tx_counts(reader.events("block"));
    return std::all_of(tx_ids.begin(), tx_ids.end(), [&](const auto& id) { return counts.count(id) > 0; });
  }));
  std::this_thread::sleep_for(300ms);
  const auto blocks = reader.events("block");
  const auto counts = tx_counts(blocks);
  for (const auto& id : tx_ids) {
    REQUIRE(counts.count(id));
    CHECK(counts.at(id) == 1);
  }
  for (const auto& b : blocks) {
    for (const auto& t : b["txs"]) CHECK(t["code"] == "VALID");
  }
  CHECK(reader.text().find(": keepalive") != std::string::npos);
}

TEST_CASE("the event stream resumes after Last-Event-ID and carries poses") {
  LiveHttp h;
  seed_mission_assets(h);
  const auto height = h.backend.height("mychannel");
  REQUIRE(height >= 3);
  SseReader reader(h.api->port(), "/api/events?lastEventId=0");
  CHECK(eventually([&] { return reader.events("block").size() == height - 1; }));
  const auto blocks = reader.events("block");
  for (std::size_t i = 0; i < blocks.size(); ++i) CHECK(blocks[i]["block"] == i + 1);

  h.live.ex.run_sync(
      [&] { h.live.bus.publish({sim::pose_topic("ground"), 7, sim::PoseMsg{"ground", {1, 2, 0, 0.5}}}); });
  CHECK(eventually([&] { return reader.events("pose").size() == 1; }));
  const auto pose = reader.events("pose").at(0);
  CHECK(pose["robot_id"] == "ground");
  CHECK(pose["stamp"] == "7");
}
