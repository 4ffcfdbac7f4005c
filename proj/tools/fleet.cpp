#include "fleet.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>

#include "fleetledger/error.hpp"

namespace fleetcli {

NetworkSpec default_fleet_spec(const sim::MissionSpec& mission) {
  auto spec = NetworkSpec::default_spec();
  spec.identities.push_back({"Org1", "admin.org1", Role::admin});
  spec.identities.push_back({"Org2", "admin.org2", Role::admin});
  for (const auto& r : mission.robots) spec.identities.push_back({robot_org(r), robot_subject(r.id), Role::client});
  ChannelSpec ch;
  ch.name = "mychannel";
  ch.orgs = {"Org1", "Org2"};
  for (const auto cc : {contracts::kPathChaincode, contracts::kObjectChaincode, contracts::kCommandChaincode}) {
    ChaincodeSpec s;
    s.name = std::string(cc);
    s.approve = ch.orgs;
    ch.chaincodes.push_back(std::move(s));
  }
  spec.channels.push_back(std::move(ch));
  return spec;
}

std::string robot_org(const sim::RobotSpec& robot) { return robot.kind == sim::RobotKind::aerial ? "Org2" : "Org1"; }

std::string robot_subject(const std::string& robot_id) { return "recorder." + robot_id; }

void SceneFiles::add_options(CLI::App& cmd) {
  cmd.add_option("spec,--spec", spec, "network spec (JSON); built-in two-org fleet network when omitted")
      ->check(CLI::ExistingFile);
  cmd.add_option("--world", world, "world model (JSON)")->check(CLI::ExistingFile);
  cmd.add_option("--mission", mission, "mission spec (JSON)")->check(CLI::ExistingFile);
  cmd.add_option("--labels", labels, "object labels, one per line")->check(CLI::ExistingFile);
}

Scene Scene::load(const SceneFiles& files) {
  Scene s;
  s.world = files.world ? sim::load_world(*files.world) : sim::WorldModel::default_world();
  s.mission = files.mission ? sim::load_mission(*files.mission) : sim::MissionSpec::default_mission(s.world);
  s.spec = files.spec ? load_network_spec(*files.spec) : default_fleet_spec(s.mission);
  s.labels = files.labels ? contracts::load_labels(*files.labels) : contracts::default_coco_labels();
  return s;
}

LedgerClient& RobotClients::operator()(const std::string& robot_id) {
  if (auto it = clients_.find(robot_id); it != clients_.end()) return *it->second;
  const auto subject = robot_subject(robot_id);
  const auto& issued = net_.issued_identities();
  auto found = std::find_if(issued.begin(), issued.end(), [&](const Identity& i) { return i.subject_id() == subject; });
  Identity id;
  if (found != issued.end()) {
    id = *found;
  } else {
    auto robot = std::find_if(mission_.robots.begin(), mission_.robots.end(),
                              [&](const sim::RobotSpec& r) { return r.id == robot_id; });
    auto org = robot != mission_.robots.end() ? robot_org(*robot) : net_.org_ids().front();
    const auto orgs = net_.org_ids();
    if (std::find(orgs.begin(), orgs.end(), org) == orgs.end()) org = orgs.front();
    id = net_.issue_identity(org, subject, Role::client);
  }
  auto client = net_.client(id, channel_, to_bytes(subject));
  auto& ref = *client;
  clients_.emplace(robot_id, std::move(client));
  return ref;
}

void save_wallet(const Network& net, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_to_wallet(dir, net.gateway_identity());
  for (const auto& id : net.issued_identities()) {
    const auto role = id.certificate().role;
    if (role == Role::client || role == Role::admin) save_to_wallet(dir, id);
  }
}

FleetNode::FleetNode(Scene scene, NodeOptions options) : scene_(std::move(scene)), options_(std::move(options)) {
  const auto contracts = contracts::standard_contracts(scene_.labels);
  net_ = ex_.run_sync([&] {
    auto net = Network::bring_up(ex_, scene_.spec);
    net->apply_channel_specs(contracts);
    return net;
  });
  if (options_.wallet) {
    ex_.run_sync([&] { save_wallet(*net_, *options_.wallet); });
    spdlog::info("wallet written to {}", options_.wallet->string());
  }

  sim::TopicBus* bus = nullptr;
  if (options_.sim) {
    ex_.run_sync([&] {
      clients_ = std::make_unique<RobotClients>(*net_, scene_.mission, options_.mission.channel);
      runner_ = std::make_unique<recorder::MissionRunner>(
          ex_, scene_.world, scene_.mission, [this](const std::string& id) -> LedgerClient& { return (*clients_)(id); },
          options_.mission);
      runner_->on_finished([this] {
        finished_ = true;
        spdlog::info("mission finished");
      });
    });
    bus = &runner_->bus();
  }

  if (options_.gateway) {
    gateway::ServerOptions so;
    so.host = options_.gateway->host;
    so.port = options_.gateway->port;
    so.contracts = contracts;
    server_ = std::make_unique<gateway::GatewayServer>(*net_, so);
    if (bus) server_->attach_bus(*bus);
    server_->start();
  }

  if (options_.http) {
    backend_ = std::make_unique<gateway::NetworkBackend>(*net_, net_->gateway_identity(), bus);
    gateway::HttpOptions ho;
    ho.host = options_.http->host;
    ho.port = options_.http->port;
    ho.ui_dir = options_.ui_dir;
    ho.world = sim::to_json(scene_.world);
    ho.default_channel = options_.mission.channel;
    for (const auto& r : scene_.mission.robots) ho.robots.push_back(r.id);
    http_ = std::make_unique<gateway::HttpApi>(*backend_, ho);
    http_->start();
  }

  if (runner_) ex_.run_sync([&] { runner_->start(); });
}

FleetNode::~FleetNode() {
  if (http_) http_->stop();
  if (server_) server_->stop();
  http_.reset();
  server_.reset();
  try {
    backend_.reset();
    ex_.run_sync([&] {
      runner_.reset();
      clients_.reset();
      net_.reset();
    });
  } catch (const std::exception& e) {
    spdlog::warn("shutdown: {}", e.what());
  }
  ex_.stop();
}

bool FleetNode::mission_finished() {
  return ex_.run_sync([&] { return finished_; });
}

std::optional<std::uint16_t> FleetNode::gateway_port() const {
  if (!server_) return std::nullopt;
  return server_->port();
}

std::optional<std::uint16_t> FleetNode::http_port() const {
  if (!http_) return std::nullopt;
  return http_->port();
}

}  // namespace fleetcli
