#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fleetledger/executor.hpp"
#include "fleetledger/identity.hpp"
#include "fleetledger/ledger.hpp"
#include "fleetledger/orderer.hpp"
#include "fleetledger/peer.hpp"

namespace fleetledger {

struct Invocation {
  std::string chaincode;
  std::string function;
  std::vector<std::string> args;
};

struct SubmitOutcome {
  Hash tx_id{};
  /// False when the transaction never reached ordering (endorsement or
  /// contract failure, orderer rejection); `error` says why.
  bool ordered = false;
  std::optional<ValidationCode> code;  // set once committed
  std::string error;
  Bytes payload;
  Timestamp submit_time{};
  Timestamp commit_time{};
  std::uint64_t block_no = 0;

  bool valid() const { return code == ValidationCode::valid; }
};

struct EvaluateOutcome {
  bool ok = false;
  Bytes payload;
  std::string error;
};

/// What a recorder or application needs from the network: submit writes,
/// evaluate queries. Handlers always run on executor().
class LedgerClient {
 public:
  using SubmitHandler = std::function<void(const SubmitOutcome&)>;
  using AcceptHandler = std::function<void(const SubmitOutcome&)>;
  using EvaluateHandler = std::function<void(const EvaluateOutcome&)>;

  virtual ~LedgerClient() = default;

  /// `on_accepted` fires once the orderer accepted (or something failed
  /// first); `on_committed` fires with the commit outcome, or with the
  /// failure when the tx never reached ordering.
  virtual void submit(const Invocation& inv, SubmitHandler on_committed, AcceptHandler on_accepted = {},
                      std::optional<Timestamp> submit_time = std::nullopt) = 0;
  virtual void evaluate(const Invocation& inv, EvaluateHandler handler) = 0;
  virtual Executor& executor() = 0;
  virtual const Identity& identity() const = 0;
};

/// Deterministic 16-byte nonces: hash(salt, counter).
class NonceSource {
 public:
  explicit NonceSource(Bytes salt) : salt_(std::move(salt)) {}
  Bytes next();

 private:
  Bytes salt_;
  std::uint64_t counter_ = 0;
};

/// In-process client bound to one channel. Confined to the network's
/// executor. Endorses at one peer per org, requires the chaincode's
/// endorsement count, submits to the orderer, and listens for commit
/// events on `event_peer`.
class ChannelClient final : public LedgerClient {
 public:
  ChannelClient(Executor& executor, Identity identity, std::string channel, std::vector<Peer*> endorsers,
                Orderer& orderer, Peer& event_peer, std::uint32_t required_endorsements,
                std::optional<Bytes> nonce_salt = std::nullopt);
  ~ChannelClient() override;

  void submit(const Invocation& inv, SubmitHandler on_committed, AcceptHandler on_accepted = {},
              std::optional<Timestamp> submit_time = std::nullopt) override;
  void evaluate(const Invocation& inv, EvaluateHandler handler) override;
  Executor& executor() override { return executor_; }
  const Identity& identity() const override { return identity_; }
  const std::string& channel() const { return channel_; }

  /// Endorse and assemble without submitting.
  Transaction prepare(const Invocation& inv, Timestamp submit_time);
  std::size_t in_flight() const { return pending_.size(); }

 private:
  void on_event(const CommitEvent& ev);

  Executor& executor_;
  Identity identity_;
  std::string channel_;
  std::vector<Peer*> endorsers_;
  Orderer& orderer_;
  Peer& event_peer_;
  std::uint32_t required_;
  NonceSource nonces_;
  Peer::ListenerId listener_;
  struct Pending {
    SubmitHandler handler;
    Timestamp submit_time;
    Bytes payload;
  };
  std::map<Hash, Pending> pending_;
  std::shared_ptr<bool> alive_ = std::make_shared<bool>(true);
};

}  // namespace fleetledger
