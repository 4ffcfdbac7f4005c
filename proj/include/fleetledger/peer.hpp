#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fleetledger/chaincode.hpp"
#include "fleetledger/channel.hpp"
#include "fleetledger/executor.hpp"
#include "fleetledger/identity.hpp"
#include "fleetledger/ledger.hpp"
#include "fleetledger/metrics.hpp"
#include "fleetledger/orderer.hpp"

namespace fleetledger {

struct Proposal {
  std::string channel;
  std::string chaincode;
  std::string function;
  std::vector<std::string> args;
  Certificate creator;
  Bytes nonce;  // 16 bytes, unique per client per proposal
  Bytes client_signature;

  Bytes signed_bytes() const;
  /// tx id of the transaction this proposal becomes once simulated.
  Hash tx_id_for(const RwSet& rwset) const;

  void encode(Encoder& e) const;
  static Proposal decode(Decoder& d);
};

/// Builds and signs a proposal.
Proposal make_proposal(const Identity& client, std::string channel, std::string chaincode, std::string function,
                       std::vector<std::string> args, Bytes nonce);

struct ProposalResponse {
  bool ok = false;
  std::string error;  // contract error message when !ok
  Hash tx_id{};
  RwSet rwset;
  Bytes payload;
  Certificate endorser;
  Bytes endorser_signature;  // over Transaction::endorsement_payload(tx_id, rwset, payload)

  void encode(Encoder& e) const;
  static ProposalResponse decode(Decoder& d);
};

struct CommitEvent {
  std::string channel;
  std::uint64_t block_no = 0;
  Hash tx_id{};
  ValidationCode code = ValidationCode::valid;
  Timestamp commit_time{};

  void encode(Encoder& e) const;
  static CommitEvent decode(Decoder& d);
  bool operator==(const CommitEvent&) const = default;
};

/// Joins endorsements into a client-signed transaction. Throws
/// Error(endorsement_divergence) when the endorsers disagree and
/// Error(contract_error) when any response failed.
Transaction assemble_transaction(const Proposal& proposal, const std::vector<ProposalResponse>& responses,
                                 const Identity& client, Timestamp submit_time);

/// Endorsing and committing peer. Confined to its executor.
class Peer {
 public:
  using CommitListener = std::function<void(const CommitEvent&)>;
  using BlockListener = std::function<void(const Block&)>;
  using HaltListener = std::function<void(const std::string& channel, const std::string& reason)>;
  using ListenerId = std::uint64_t;

  Peer(Executor& executor, Identity identity, std::optional<std::filesystem::path> data_dir = std::nullopt);
  ~Peer();
  Peer(const Peer&) = delete;
  Peer& operator=(const Peer&) = delete;

  const std::string& id() const { return identity_.subject_id(); }
  const std::string& org_id() const { return identity_.org_id(); }
  const Identity& identity() const { return identity_; }

  /// Package + install: registers an in-process contract implementation.
  void install(std::shared_ptr<const Contract> contract);
  bool is_installed(std::string_view name) const;

  /// Starts pulling blocks from the orderer at the peer's ledger height.
  /// Throws Error(not_a_member) when the peer's org is not in the channel.
  void join(std::shared_ptr<const Channel> channel, Orderer& orderer);
  /// Stops delivery; with `wipe` the local ledger is discarded.
  void leave(const std::string& channel, bool wipe);
  bool joined(std::string_view channel) const;

  /// Simulates against the current state; never mutates it. Throws Error
  /// with unknown_channel, not_a_member, unknown_chaincode or bad signature
  /// (as invalid_argument). Contract failures come back as !ok responses.
  ProposalResponse endorse(const Proposal& proposal);

  /// Read-only evaluation without ordering. Throws Error(unknown_chaincode)
  /// or ContractError.
  Bytes query(const std::string& channel, const std::string& chaincode, const std::string& function,
              const std::vector<std::string>& args);

  ListenerId on_commit(const std::string& channel, CommitListener listener);
  ListenerId on_block(const std::string& channel, BlockListener listener);
  void on_halt(HaltListener listener) { halt_listener_ = std::move(listener); }
  void remove_listener(ListenerId id);

  const ChannelLedger& ledger(const std::string& channel) const;
  bool halted(const std::string& channel) const;

  /// Feeds a block as if delivered; used by the commit loop and by tests
  /// that inject tampered blocks.
  void process_block(const std::string& channel, const Block& block);

  CpuMeter& cpu() { return cpu_; }

 private:
  struct ChannelSlot {
    std::shared_ptr<const Channel> channel;
    std::unique_ptr<ChannelLedger> ledger;
    Orderer* orderer = nullptr;
    std::optional<Orderer::SubscriptionId> subscription;
    bool halted = false;
  };

  ChannelSlot& slot(const std::string& channel);
  const ChannelSlot& slot(const std::string& channel) const;
  const Contract& runnable_contract(const ChannelSlot& slot, const std::string& chaincode) const;

  Executor& executor_;
  Identity identity_;
  std::optional<std::filesystem::path> data_dir_;
  std::map<std::string, std::shared_ptr<const Contract>, std::less<>> installed_;
  std::map<std::string, ChannelSlot, std::less<>> channels_;
  std::map<ListenerId, std::pair<std::string, CommitListener>> commit_listeners_;
  std::map<ListenerId, std::pair<std::string, BlockListener>> block_listeners_;
  HaltListener halt_listener_;
  ListenerId next_listener_ = 1;
  CpuMeter cpu_;
  std::shared_ptr<bool> alive_ = std::make_shared<bool>(true);
};

}  // namespace fleetledger
