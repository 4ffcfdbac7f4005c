#pragma once

// Client gateway over TCP. Every frame is a 4-byte big-endian length and a
// canonical payload: kind byte, request id, body. A session starts with a
// certificate hello, binds one channel, then endorses, submits, queries and
// streams commit events, blocks or simulator topics.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>

#include "fleetledger/client.hpp"
#include "fleetledger/error.hpp"
#include "fleetledger/network.hpp"
#include "fleetledger/sim.hpp"

namespace fleetledger::gateway {

inline constexpr std::uint32_t kDefaultMaxFrame = 1u << 20;

enum class Kind : std::uint8_t {
  hello = 1,
  channel = 2,
  chaincode = 3,
  endorse = 4,
  submit = 5,
  query = 6,
  events_subscribe = 7,
  deliver_from = 8,
  topic_subscribe = 9,
  // Admin identities only; not bound to the session channel.
  admin_create_channel = 10,
  admin_approve = 11,
  admin_commit = 12,
  response = 64,
  commit_event = 65,
  block = 66,
  topic_message = 67,
};

std::string_view to_string(Kind kind);

struct Frame {
  Kind kind = Kind::response;
  std::uint64_t id = 0;
  Bytes body;
};

/// Length prefix included.
Bytes encode_frame(const Frame& frame);
/// Payload without the length prefix. Throws Error(decode_error).
Frame decode_frame(ByteView payload);

struct Response {
  bool ok = true;
  std::optional<ErrorCode> code;
  std::string error;
  Bytes payload;

  Bytes serialize() const;
  static Response deserialize(ByteView bytes);
  static Response failure(ErrorCode code, std::string error);
};

/// What a hello signs: a fixed context string and the client's nonce.
Bytes hello_payload(ByteView nonce);

/// Blocking TCP stream carrying frames. Sends are serialized internally.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket();
  Socket(Socket&& other) noexcept;
  Socket& operator=(Socket&& other) noexcept;

  /// Throws Error(network_down) when the peer is unreachable.
  static Socket connect(const std::string& host, std::uint16_t port);

  void send(const Frame& frame);
  /// nullopt on orderly close. Throws Error(protocol_error) for frames
  /// above `max_frame` and Error(network_down) on a broken stream.
  std::optional<Frame> receive(std::uint32_t max_frame);
  /// Unblocks pending reads; the fd stays open until destruction.
  void shutdown();
  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }

 private:
  int fd_ = -1;
  std::mutex send_mu_;
};

class Listener {
 public:
  /// Port 0 picks a free port. Throws Error(network_down).
  Listener(const std::string& host, std::uint16_t port);
  ~Listener();
  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;

  /// nullopt once closed.
  std::optional<Socket> accept();
  void close();
  std::uint16_t port() const { return port_; }

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> closed_{false};
};

struct ServerOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 7051;
  std::uint32_t max_frame = kDefaultMaxFrame;
  /// Implementations installed on an org's peers when its admin approves
  /// a chaincode. Empty means the standard path, object and command contracts.
  std::vector<std::shared_ptr<const Contract>> contracts;
};

/// Serves the network to remote clients. The network's executor must be
/// thread-safe (a RealtimeExecutor); socket threads only post to it.
class GatewayServer {
 public:
  GatewayServer(Network& network, ServerOptions options = {});
  ~GatewayServer();
  GatewayServer(const GatewayServer&) = delete;
  GatewayServer& operator=(const GatewayServer&) = delete;

  /// Makes simulator topics available to topic_subscribe. Publishing must
  /// happen on the network's executor.
  void attach_bus(sim::TopicBus& bus) { bus_ = &bus; }

  void start();
  void stop();
  std::uint16_t port() const;
  std::size_t session_count() const;
  std::uint64_t refused() const { return refused_.load(); }

 private:
  struct Session;
  void accept_loop();
  void reader(const std::shared_ptr<Session>& session);
  void handle(const std::shared_ptr<Session>& session, Frame frame);
  Response handle_hello(Session& s, const Frame& f);
  Response handle_channel(Session& s, const Frame& f);
  Response handle_endorse(Session& s, const Frame& f);
  Response handle_admin(Session& s, const Frame& f);
  void release(Session& s);
  void reap();

  Network& network_;
  ServerOptions options_;
  sim::TopicBus* bus_ = nullptr;
  std::unique_ptr<Listener> listener_;
  std::thread accept_thread_;
  mutable std::mutex mu_;
  std::set<std::shared_ptr<Session>> sessions_;
  std::atomic<std::uint64_t> refused_{0};
  std::atomic<bool> running_{false};
  std::shared_ptr<bool> alive_ = std::make_shared<bool>(true);
};

class GatewayClient;

/// A committed chaincode on the client's channel.
class ChaincodeHandle {
 public:
  ChaincodeHandle(GatewayClient& client, std::string name) : client_(&client), name_(std::move(name)) {}
  const std::string& name() const { return name_; }
  /// Blocking helpers for scripts and the CLI. They post to the client's
  /// executor, which must therefore be a RealtimeExecutor, and must not be
  /// called from its thread.
  SubmitOutcome submit(const std::string& function, std::vector<std::string> args);
  EvaluateOutcome evaluate(const std::string& function, std::vector<std::string> args);

 private:
  GatewayClient* client_;
  std::string name_;
};

/// LedgerClient over a gateway session. Handlers run on the executor given
/// at connect. Commit times are stamped with that executor's clock when the
/// event arrives, since the server clock is not shared.
class GatewayClient final : public LedgerClient {
 public:
  struct Options {
    std::uint32_t max_frame = kDefaultMaxFrame;
    Duration request_timeout = std::chrono::seconds(30);
  };

  /// Opens the connection and presents the identity. Throws
  /// Error(not_a_member) when the gateway refuses it and
  /// Error(network_down) when it cannot be reached.
  static std::unique_ptr<GatewayClient> connect(const std::string& host, std::uint16_t port, Identity identity,
                                                Executor& executor, Options options);
  static std::unique_ptr<GatewayClient> connect(const std::string& host, std::uint16_t port, Identity identity,
                                                Executor& executor) {
    return connect(host, port, std::move(identity), executor, Options{});
  }
  ~GatewayClient() override;
  GatewayClient(const GatewayClient&) = delete;
  GatewayClient& operator=(const GatewayClient&) = delete;

  /// Binds the session to a channel and starts commit events. Throws
  /// Error(unknown_channel) or Error(not_a_member).
  void connect_to_channel(const std::string& channel);
  /// Throws Error(unknown_chaincode) unless committed on the channel.
  ChaincodeHandle load_chaincode(const std::string& name);

  void submit(const Invocation& inv, SubmitHandler on_committed, AcceptHandler on_accepted = {},
              std::optional<Timestamp> submit_time = std::nullopt) override;
  void evaluate(const Invocation& inv, EvaluateHandler handler) override;
  Executor& executor() override { return executor_; }
  const Identity& identity() const override { return identity_; }
  const std::string& channel() const { return channel_; }

  /// Blocks from `from_block` on, then the live tail; sink runs on the executor.
  void deliver_from(std::uint64_t from_block, std::function<void(const Block&)> sink);
  /// Messages on `topic` ("" for every topic) from the gateway's simulator.
  void subscribe_topic(const std::string& topic, std::function<void(const sim::Message&)> handler);

  /// Admin operations. The session identity must hold the admin role;
  /// approvals are made on behalf of its org. Throw the gateway's error.
  void create_channel(const std::string& name, const std::vector<std::string>& member_orgs,
                      const OrdererConfig& config);
  void approve_chaincode(const std::string& channel, const std::string& name, const std::string& version = "1.0");
  void commit_chaincode(const std::string& channel, const std::string& name);

  bool connected() const { return connected_.load(); }
  void close();

 private:
  using Callback = std::function<void(Response)>;
  using StreamHandler = std::function<void(const Frame&)>;

  GatewayClient(Socket socket, Identity identity, Executor& executor, Options options);
  /// Returns the request id, or 0 when the connection is already closed.
  std::uint64_t send(Kind kind, Bytes body, Callback on_response, StreamHandler stream = {});
  Response request(Kind kind, Bytes body, StreamHandler stream = {});
  void read_loop();
  void on_stream(const Frame& frame);
  void on_event(const CommitEvent& ev);
  void fail_all(const std::string& why);

  Socket socket_;
  Identity identity_;
  Executor& executor_;
  Options options_;
  std::string channel_;
  NonceSource nonces_;

  std::mutex mu_;
  std::uint64_t next_id_ = 1;
  std::map<std::uint64_t, Callback> waiting_;
  std::map<std::uint64_t, StreamHandler> streams_;
  std::thread reader_;
  std::atomic<bool> connected_{true};

  // Executor-confined.
  struct Pending {
    SubmitHandler handler;
    Timestamp submit_time;
    Bytes payload;
  };
  std::map<Hash, Pending> pending_;
  std::shared_ptr<bool> alive_ = std::make_shared<bool>(true);
};

}  // namespace fleetledger::gateway
