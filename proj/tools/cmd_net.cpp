#include <spdlog/spdlog.h>

#include <iostream>
#include <mutex>

#include "cli.hpp"
#include "fleet.hpp"
#include "fleetledger/error.hpp"

namespace fleetcli {

namespace {

struct Connection {
  std::string gateway = "127.0.0.1:7051";
  std::filesystem::path identity;

  void add_options(CLI::App& cmd) {
    cmd.add_option("--gateway", gateway, "gateway host:port")->capture_default_str();
    cmd.add_option("--identity,--wallet", identity, "wallet file of the identity to present")
        ->required()
        ->check(CLI::ExistingFile);
  }

  std::unique_ptr<gateway::GatewayClient> open(Executor& ex) const {
    const auto ep = parse_endpoint(gateway);
    return gateway::GatewayClient::connect(ep.host, ep.port, load_identity_file(identity), ex);
  }
};

void print_submit(const SubmitOutcome& out) {
  if (!out.ordered) throw std::runtime_error(out.error);
  std::cout << "tx " << to_hex(out.tx_id) << " block " << out.block_no << " "
            << (out.code ? std::string(to_string(*out.code)) : "PENDING") << '\n';
  if (!out.payload.empty()) std::cout << to_string(out.payload) << '\n';
  if (!out.valid()) throw std::runtime_error("transaction committed as invalid");
}

void add_net_up(CLI::App& net) {
  auto* up = net.add_subcommand("up", "bring up orderer, peers and channels, then serve the gateway and HTTP API");
  auto files = std::make_shared<SceneFiles>();
  struct Opts {
    std::string wallet = "wallet";
    std::string gateway = "127.0.0.1:7051";
    std::string http = "127.0.0.1:8080";
    bool no_http = false;
    std::optional<std::filesystem::path> ui_dir;
    bool sim = false;
    std::optional<double> duration;
    double command_poll_s = 1.0;
  };
  auto o = std::make_shared<Opts>();
  files->add_options(*up);
  up->add_option("--wallet", o->wallet, "directory for client and admin identities")->capture_default_str();
  up->add_option("--listen", o->gateway, "gateway listen address")->capture_default_str();
  up->add_option("--http", o->http, "HTTP API listen address")->capture_default_str();
  up->add_flag("--no-http", o->no_http, "do not serve the HTTP API");
  up->add_option("--ui-dir", o->ui_dir, "static UI build served at /")->check(CLI::ExistingDirectory);
  up->add_flag("--sim", o->sim,
               "run the simulated mission here; robots execute commands, recorders attach over the gateway");
  up->add_option("--command-poll", o->command_poll_s, "seconds between command polls")->capture_default_str();
  up->add_option("--duration", o->duration, "exit after this many seconds instead of waiting for Ctrl-C");
  up->callback([files, o] {
    install_signal_handlers();
    NodeOptions no;
    no.wallet = o->wallet;
    no.gateway = parse_endpoint(o->gateway);
    if (!o->no_http) no.http = parse_endpoint(o->http);
    no.ui_dir = o->ui_dir;
    no.sim = o->sim;
    no.mission.record_poses = false;
    no.mission.record_detections = false;
    no.mission.command_poll = seconds_to_duration(o->command_poll_s);
    FleetNode node(Scene::load(*files), no);
    std::cout << "network up: channels";
    for (const auto& c : node.executor().run_sync([&] { return node.network().channel_names(); })) std::cout << ' ' << c;
    std::cout << "; gateway port " << *node.gateway_port();
    if (auto p = node.http_port()) std::cout << "; http port " << *p;
    std::cout << std::endl;
    wait_for_stop(o->duration);
    std::cout << "shutting down" << std::endl;
  });
}

void add_admin(CLI::App& app) {
  auto* ch = app.add_subcommand("channel", "channel administration over the gateway")->require_subcommand(1);
  auto* create = ch->add_subcommand("create", "create a channel and join member peers");
  struct CreateOpts {
    Connection conn;
    std::string name;
    std::vector<std::string> orgs;
    double batch_timeout_s = 2.0;
    std::uint32_t max_message_count = 10;
    std::uint64_t max_batch_bytes = 0;
  };
  auto c = std::make_shared<CreateOpts>();
  c->conn.add_options(*create);
  create->add_option("--name", c->name, "channel name")->required();
  create->add_option("--orgs", c->orgs, "member orgs")->required()->delimiter(',');
  create->add_option("--batch-timeout", c->batch_timeout_s, "seconds")->capture_default_str();
  create->add_option("--max-message-count", c->max_message_count)->capture_default_str();
  create->add_option("--max-batch-bytes", c->max_batch_bytes, "0 for no byte cap")->capture_default_str();
  create->callback([c] {
    RealtimeExecutor ex;
    auto client = c->conn.open(ex);
    OrdererConfig cfg;
    cfg.batch_timeout = seconds_to_duration(c->batch_timeout_s);
    cfg.max_message_count = c->max_message_count;
    cfg.max_batch_bytes = c->max_batch_bytes;
    client->create_channel(c->name, c->orgs, cfg);
    std::cout << "channel " << c->name << " created" << std::endl;
  });

  auto* cc = app.add_subcommand("cc", "chaincode lifecycle over the gateway")->require_subcommand(1);
  struct CcOpts {
    Connection conn;
    std::string channel = "mychannel";
    std::string name;
    std::string version = "1.0";
  };
  auto a = std::make_shared<CcOpts>();
  auto* approve = cc->add_subcommand("approve", "install and approve a chaincode for the identity's org");
  a->conn.add_options(*approve);
  approve->add_option("--channel", a->channel)->capture_default_str();
  approve->add_option("--name", a->name, "chaincode (path, object or command)")->required();
  approve->add_option("--version", a->version)->capture_default_str();
  approve->callback([a] {
    RealtimeExecutor ex;
    auto client = a->conn.open(ex);
    client->approve_chaincode(a->channel, a->name, a->version);
    std::cout << "approved " << a->name << " on " << a->channel << " for "
              << load_identity_file(a->conn.identity).org_id() << std::endl;
  });
  auto m = std::make_shared<CcOpts>();
  auto* commit = cc->add_subcommand("commit", "commit a chaincode definition once enough orgs approved");
  m->conn.add_options(*commit);
  commit->add_option("--channel", m->channel)->capture_default_str();
  commit->add_option("--name", m->name)->required();
  commit->callback([m] {
    RealtimeExecutor ex;
    auto client = m->conn.open(ex);
    client->commit_chaincode(m->channel, m->name);
    std::cout << "committed " << m->name << " on " << m->channel << std::endl;
  });
}

void add_tx(CLI::App& app) {
  struct TxOpts {
    Connection conn;
    std::string channel = "mychannel";
  };
  for (const bool write : {true, false}) {
    auto* cmd = app.add_subcommand(write ? "invoke" : "query",
                                   write ? "submit a transaction and wait for its commit" : "evaluate a read");
    auto t = std::make_shared<TxOpts>();
    t->conn.add_options(*cmd);
    cmd->add_option("--channel", t->channel)->capture_default_str();
    cmd->allow_extras()->footer("Positionals: CHAINCODE FUNCTION [ARGS...], passed through verbatim.");
    cmd->callback([cmd, t, write] {
      const auto call = cmd->remaining();
      if (call.size() < 2) throw CLI::ValidationError(cmd->get_name(), "expected CHAINCODE FUNCTION [ARGS...]");
      for (const auto& a : call) {
        if (a.rfind("--", 0) == 0) throw CLI::ExtrasError(cmd->get_name(), {a});
      }
      RealtimeExecutor ex;
      auto client = t->conn.open(ex);
      client->connect_to_channel(t->channel);
      auto handle = client->load_chaincode(call[0]);
      const std::vector<std::string> args(call.begin() + 2, call.end());
      if (write) {
        print_submit(handle.submit(call[1], args));
      } else {
        auto out = handle.evaluate(call[1], args);
        if (!out.ok) throw std::runtime_error(out.error);
        std::cout << to_string(out.payload) << std::endl;
      }
    });
  }
}

void add_recorder(CLI::App& app) {
  auto* cmd = app.add_subcommand("recorder", "record a robot's topic from the gateway's simulator onto the ledger");
  struct Opts {
    Connection conn;
    std::string channel = "mychannel";
    std::optional<std::string> robot;
    std::optional<std::string> topic;
    double max_freq = 0.2;
    std::string chaincode = "path";
    bool detections = false;
    bool download = false;
    std::optional<double> duration;
  };
  auto o = std::make_shared<Opts>();
  o->conn.add_options(*cmd);
  cmd->add_option("--channel", o->channel)->capture_default_str();
  cmd->add_option("--robot", o->robot, "robot id; the topic defaults to its pose or detection topic");
  cmd->add_option("--topic", o->topic, "data topic, e.g. /ground/pose");
  cmd->add_option("--max-freq", o->max_freq, "maximum records per second")->capture_default_str();
  cmd->add_option("--chaincode", o->chaincode)->capture_default_str();
  cmd->add_flag("--detections", o->detections, "record detections as object assets instead of poses");
  cmd->add_flag("--download", o->download, "read each record back after it commits");
  cmd->add_option("--duration", o->duration, "seconds to run (until Ctrl-C when omitted)");
  cmd->callback([o] {
    if (!o->robot && !o->topic) throw CLI::ValidationError("recorder", "--robot or --topic is required");
    install_signal_handlers();
    RealtimeExecutor ex;
    auto client = o->conn.open(ex);
    client->connect_to_channel(o->channel);
    std::unique_ptr<recorder::RecorderBase> rec;
    std::string topic;
    if (o->detections) {
      topic = o->topic ? *o->topic : sim::detection_topic(*o->robot);
      rec = ex.run_sync([&] { return std::unique_ptr<recorder::RecorderBase>(new recorder::DetectionRecorder(*client)); });
    } else {
      recorder::RecorderConfig cfg;
      cfg.data_topic = o->topic ? *o->topic : sim::pose_topic(*o->robot);
      cfg.max_freq = o->max_freq;
      cfg.channel = o->channel;
      cfg.chaincode = o->chaincode;
      cfg.wallet = o->conn.identity.parent_path();
      cfg.download_after_write = o->download;
      cfg.validate();
      topic = cfg.data_topic;
      rec = ex.run_sync([&] { return std::unique_ptr<recorder::RecorderBase>(new recorder::Recorder(*client, cfg)); });
    }
    auto* raw = rec.get();
    client->subscribe_topic(topic, [raw](const sim::Message& m) { raw->on_message(m); });
    std::cout << "recording " << topic << " as " << client->identity().subject_id() << std::endl;
    wait_for_stop(o->duration);
    const auto stats = ex.run_sync([&] { return raw->stats(); });
    client->close();
    ex.run_sync([&] { rec.reset(); });
    std::cout << "received " << stats.received << ", recorded " << stats.recorded << ", durable " << stats.durable
              << ", invalid " << stats.invalid << ", failed " << stats.failed << ", skipped "
              << stats.skipped_existing << ", downloads " << stats.downloads << std::endl;
  });
}

}  // namespace

void add_net_commands(CLI::App& app) {
  auto* net = app.add_subcommand("net", "network node and administration")->require_subcommand(1);
  add_net_up(*net);
  add_admin(*net);
  add_tx(app);
  add_recorder(app);
}

}  // namespace fleetcli
