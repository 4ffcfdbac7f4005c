#pragma once

// JSON/HTTP facade for the operator UI. Every read endpoint is a pure view
// over peer queries made through an ApiBackend, so a restarted facade
// serves byte-identical responses.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "fleetledger/client.hpp"
#include "fleetledger/network.hpp"
#include "fleetledger/sim.hpp"

namespace httplib {
class Server;
}

namespace fleetledger::gateway {

/// One committed transaction as streamed to event subscribers.
struct TxSummary {
  std::string tx_id;
  std::string chaincode;
  std::string function;
  std::string code;
};

struct BlockSummary {
  std::string channel;
  std::uint64_t number = 0;
  std::int64_t commit_time = 0;
  std::vector<TxSummary> txs;
  nlohmann::json to_json() const;
};

/// What the facade needs from a ledger. Calls block the calling thread and
/// throw Error(network_down) when the ledger is unreachable.
class ApiBackend {
 public:
  using BlockSink = std::function<void(const BlockSummary&)>;
  using PoseSink = std::function<void(const sim::Message&)>;
  using SubscriptionId = std::uint64_t;

  virtual ~ApiBackend() = default;
  virtual std::vector<std::string> channels() = 0;
  virtual bool has_channel(const std::string& channel) = 0;
  virtual EvaluateOutcome query(const std::string& channel, const Invocation& inv) = 0;
  /// Returns once the orderer accepted the transaction or it failed.
  virtual SubmitOutcome submit(const std::string& channel, const Invocation& inv) = 0;
  /// Org of the identity the facade submits with.
  virtual std::string submitter_org() = 0;
  /// Committed blocks numbered >= from_block, then live blocks. Sinks may
  /// run on any thread.
  virtual SubscriptionId subscribe_blocks(const std::string& channel, std::uint64_t from_block, BlockSink sink) = 0;
  /// Live pose messages; 0 when there is no simulator.
  virtual SubscriptionId subscribe_poses(PoseSink sink) = 0;
  virtual void unsubscribe(SubscriptionId id) = 0;
  /// Current block height of a channel.
  virtual std::uint64_t height(const std::string& channel) = 0;
  virtual std::int64_t now_ns() = 0;
};

/// Backend over an in-process network confined to a thread-safe executor.
class NetworkBackend final : public ApiBackend {
 public:
  /// `bus`, when given, must be published on the network's executor.
  NetworkBackend(Network& network, Identity submitter, sim::TopicBus* bus = nullptr);
  ~NetworkBackend() override;

  std::vector<std::string> channels() override;
  bool has_channel(const std::string& channel) override;
  EvaluateOutcome query(const std::string& channel, const Invocation& inv) override;
  SubmitOutcome submit(const std::string& channel, const Invocation& inv) override;
  std::string submitter_org() override { return submitter_.org_id(); }
  SubscriptionId subscribe_blocks(const std::string& channel, std::uint64_t from_block, BlockSink sink) override;
  SubscriptionId subscribe_poses(PoseSink sink) override;
  void unsubscribe(SubscriptionId id) override;
  std::uint64_t height(const std::string& channel) override;
  std::int64_t now_ns() override;

  /// Fails every call with network_down from now on, as if the ledger
  /// became unreachable.
  void set_down(bool down) { down_ = down; }

 private:
  template <class F>
  auto on_executor(F&& fn) -> decltype(fn());
  Peer& view_peer(const std::string& channel);

  Network& network_;
  Identity submitter_;
  sim::TopicBus* bus_;
  std::atomic<bool> down_{false};
  // Executor-confined.
  std::map<std::string, std::unique_ptr<ChannelClient>> clients_;
  std::map<SubscriptionId, std::pair<Peer*, Peer::ListenerId>> block_subs_;
  std::map<SubscriptionId, sim::TopicBus::SubscriptionId> pose_subs_;
  SubscriptionId next_sub_ = 1;
};

struct HttpOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 8080;  // 0 picks a free port
  std::string default_channel = "mychannel";
  std::string cors_origin = "*";
  /// Static files for the UI build, served at "/" when set.
  std::optional<std::filesystem::path> ui_dir;
  /// Known robots beyond those that already have trajectory assets.
  std::vector<std::string> robots;
  std::optional<nlohmann::json> world;
  /// Interval of SSE keep-alive comments.
  std::chrono::milliseconds keepalive{15000};
};

struct SseHub;

/// Routes under /api: channels, assets, robot trajectories, objects,
/// commands, the world spec and a server-sent event stream.
class HttpApi {
 public:
  HttpApi(ApiBackend& backend, HttpOptions options);
  ~HttpApi();
  HttpApi(const HttpApi&) = delete;
  HttpApi& operator=(const HttpApi&) = delete;

  /// Binds and serves on a background thread. Throws Error(network_down).
  void start();
  void stop();
  std::uint16_t port() const { return port_; }

  struct Reply {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
  };
  /// The routing logic without the socket, for tests and the CLI.
  Reply get(const std::string& path, const std::map<std::string, std::string>& params = {});
  Reply post_command(const std::string& body);

 private:
  Reply channels();
  Reply assets(const std::string& channel, const std::map<std::string, std::string>& params);
  Reply trajectory(const std::string& robot, const std::map<std::string, std::string>& params);
  Reply objects(const std::map<std::string, std::string>& params);
  Reply world();
  bool known_robot(const std::string& channel, const std::string& robot);
  std::uint64_t next_command_seq(const std::string& channel);
  void install_routes();

  ApiBackend& backend_;
  HttpOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::uint16_t port_ = 0;
  std::shared_ptr<SseHub> hub_;
  std::mutex seq_mu_;
  std::uint64_t reserved_seq_ = 0;
};

}  // namespace fleetledger::gateway
