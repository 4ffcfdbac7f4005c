#pragma once

// One process hosting the network, optionally the gateway, the HTTP facade
// and a simulated mission. Used by `net up` and `demo`.

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "cli.hpp"
#include "fleetledger/contracts.hpp"
#include "fleetledger/gateway.hpp"
#include "fleetledger/http_api.hpp"
#include "fleetledger/network.hpp"
#include "fleetledger/recorder.hpp"

namespace fleetcli {

using namespace fleetledger;

/// Orderer, Org1 and Org2 with one peer each, org admins, one recorder
/// identity per robot and "mychannel" with path, object and command.
NetworkSpec default_fleet_spec(const sim::MissionSpec& mission);

/// Org a robot records as: ground robots Org1, aerial robots Org2.
std::string robot_org(const sim::RobotSpec& robot);
std::string robot_subject(const std::string& robot_id);

struct SceneFiles {
  std::optional<std::filesystem::path> spec;
  std::optional<std::filesystem::path> world;
  std::optional<std::filesystem::path> mission;
  std::optional<std::filesystem::path> labels;
  void add_options(CLI::App& cmd);
};

struct Scene {
  NetworkSpec spec;
  sim::WorldModel world;
  sim::MissionSpec mission;
  std::vector<std::string> labels;
  static Scene load(const SceneFiles& files);
};

/// Per-robot in-process clients with the robot's recorder identity,
/// issued on demand when the spec lacks one. Executor-confined.
class RobotClients {
 public:
  RobotClients(Network& net, const sim::MissionSpec& mission, std::string channel)
      : net_(net), mission_(mission), channel_(std::move(channel)) {}
  LedgerClient& operator()(const std::string& robot_id);

 private:
  Network& net_;
  const sim::MissionSpec& mission_;
  std::string channel_;
  std::map<std::string, std::unique_ptr<ChannelClient>> clients_;
};

struct NodeOptions {
  std::optional<std::filesystem::path> wallet;
  std::optional<Endpoint> gateway;
  std::optional<Endpoint> http;
  std::optional<std::filesystem::path> ui_dir;
  bool sim = false;
  recorder::MissionOptions mission;
};

/// Everything runs on an owned RealtimeExecutor.
class FleetNode {
 public:
  FleetNode(Scene scene, NodeOptions options);
  ~FleetNode();
  FleetNode(const FleetNode&) = delete;
  FleetNode& operator=(const FleetNode&) = delete;

  RealtimeExecutor& executor() { return ex_; }
  Network& network() { return *net_; }
  const Scene& scene() const { return scene_; }
  recorder::MissionRunner* runner() { return runner_.get(); }
  bool mission_finished();
  std::optional<std::uint16_t> gateway_port() const;
  std::optional<std::uint16_t> http_port() const;

 private:
  Scene scene_;
  NodeOptions options_;
  RealtimeExecutor ex_;
  std::unique_ptr<Network> net_;
  std::unique_ptr<RobotClients> clients_;
  std::unique_ptr<recorder::MissionRunner> runner_;
  std::unique_ptr<gateway::GatewayServer> server_;
  std::unique_ptr<gateway::NetworkBackend> backend_;
  std::unique_ptr<gateway::HttpApi> http_;
  bool finished_ = false;  // executor-confined
};

/// Writes every client and admin identity the network issued.
void save_wallet(const Network& net, const std::filesystem::path& dir);

}  // namespace fleetcli
