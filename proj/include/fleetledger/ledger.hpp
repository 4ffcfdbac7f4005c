#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "fleetledger/bytes.hpp"
#include "fleetledger/codec.hpp"
#include "fleetledger/executor.hpp"
#include "fleetledger/identity.hpp"

namespace fleetledger {

/// Position of the transaction that last wrote a key.
struct Version {
  std::uint64_t block_no = 0;
  std::uint32_t tx_index = 0;
  auto operator<=>(const Version&) const = default;
};

std::string to_string(const Version& v);

struct ReadItem {
  std::string key;
  std::optional<Version> version;  // nullopt: key was absent when read
  bool operator==(const ReadItem&) const = default;
};

struct WriteItem {
  std::string key;
  Bytes value;
  bool is_delete = false;
  bool operator==(const WriteItem&) const = default;
};

/// Reads and writes keyed by unique keys in ascending order.
struct RwSet {
  std::vector<ReadItem> reads;
  std::vector<WriteItem> writes;

  bool well_formed() const;
  void encode(Encoder& e) const;
  static RwSet decode(Decoder& d);
  Bytes serialize() const;
  bool operator==(const RwSet&) const = default;
};

struct Endorsement {
  std::string org_id;
  Certificate endorser;
  Bytes signature;
  bool operator==(const Endorsement&) const = default;
};

struct Transaction {
  Hash tx_id{};
  std::string channel;
  std::string chaincode;
  std::string function;
  std::vector<std::string> args;
  Certificate creator;
  Bytes nonce;
  RwSet rwset;
  Bytes response_payload;
  std::vector<Endorsement> endorsements;
  Timestamp submit_time{};
  Bytes client_signature;

  /// Hash over (channel, chaincode, function, args, creator, nonce, rwset).
  Hash compute_id() const;
  /// What each endorser signs: (tx_id, rwset, response_payload).
  Bytes endorsement_payload() const;
  static Bytes endorsement_payload(const Hash& tx_id, const RwSet& rwset, ByteView response_payload);
  /// Canonical encoding without the client signature.
  Bytes signed_body() const;

  void encode(Encoder& e) const;
  static Transaction decode(Decoder& d);
  Bytes serialize() const;
  static Transaction deserialize(ByteView bytes);
  bool operator==(const Transaction&) const = default;
};

/// Pseudo-chaincode carried by the genesis transaction.
inline constexpr std::string_view kConfigChaincode = "_config";

enum class ValidationCode : std::uint8_t {
  valid = 0,
  mvcc_read_conflict = 1,
  endorsement_policy_failure = 2,
  bad_signature = 3,
  duplicate_txid = 4,
  unknown_chaincode = 5,
  not_a_member = 6,
};

std::string_view to_string(ValidationCode code);

enum class CutReason : std::uint8_t { genesis = 0, timeout = 1, max_messages = 2, max_bytes = 3 };

std::string_view to_string(CutReason reason);

struct BlockHeader {
  std::uint64_t number = 0;
  Hash prev_hash{};
  Hash data_hash{};

  Hash hash() const;
  bool operator==(const BlockHeader&) const = default;
};

struct Block {
  BlockHeader header;
  std::vector<Transaction> transactions;
  std::vector<ValidationCode> validation_codes;  // empty until committed
  CutReason cut_reason = CutReason::genesis;
  Timestamp cut_time{};

  static Hash compute_data_hash(const std::vector<Transaction>& txs);

  void encode(Encoder& e) const;
  static Block decode(Decoder& d);
  bool operator==(const Block&) const = default;
};

/// Stored block bytes: magic, format version, hash-algorithm byte, canonical
/// block, then a digest of everything before it.
Bytes encode_block_file(const Block& block);
/// Throws Error(chain_broken) on a bad digest, Error(decode_error) on bad framing.
Block decode_block_file(ByteView bytes);

struct StateEntry {
  Bytes value;
  Version version;
  bool operator==(const StateEntry&) const = default;
};

class WorldState {
 public:
  const StateEntry* find(std::string_view key) const;
  /// Entries whose key starts with `prefix`, in key order.
  std::vector<std::pair<std::string, StateEntry>> range(std::string_view prefix) const;
  void apply(const std::vector<WriteItem>& writes, Version version);

  std::uint64_t height() const { return height_; }
  void set_height(std::uint64_t h) { height_ = h; }
  bool seen_tx(const Hash& id) const { return seen_.count(id) != 0; }
  void mark_seen(const Hash& id) { seen_.insert(id); }
  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, StateEntry, std::less<>>& entries() const { return entries_; }

  /// `key<TAB>hex(value)<TAB>block_no.tx_index` lines in key order.
  std::string dump() const;

 private:
  std::map<std::string, StateEntry, std::less<>> entries_;
  std::set<Hash> seen_;
  std::uint64_t height_ = 0;
};

/// Everything commit-time validation needs to know about a channel.
struct ValidationPolicy {
  TrustedRoots member_roots;  // channel member orgs only
  /// Committed chaincode name -> number of distinct orgs that must endorse.
  std::map<std::string, std::uint32_t, std::less<>> chaincodes;
};

/// ⌈(n+1)/2⌉ of n orgs.
std::uint32_t majority_of(std::size_t n);

/// Validates every transaction in order, applies the valid ones, advances
/// the state height and fills block.validation_codes.
std::vector<ValidationCode> validate_and_commit(WorldState& state, Block& block, const ValidationPolicy& policy);

struct ChainCheck {
  bool ok = true;
  std::uint64_t broken_at = 0;
  std::string reason;
};

/// Checks numbering, data hashes and the prev_hash chain over decoded blocks.
ChainCheck verify_chain(const std::vector<Block>& blocks);
/// Same over stored block-file bytes; decode failures count as breaks.
ChainCheck verify_chain_files(const std::vector<Bytes>& stored);

/// Rebuilds the world state from block 0. Throws Error(chain_broken).
WorldState replay(const std::vector<Block>& blocks, const ValidationPolicy& policy);

std::optional<StateEntry> query_state(const WorldState& state, std::string_view key);
std::vector<std::pair<std::string, StateEntry>> range_query(const WorldState& state, std::string_view prefix);

/// Per-channel block store plus world state, optionally mirrored to
/// `<dir>/blocks/<channel>/<number>.blk`.
class ChannelLedger {
 public:
  explicit ChannelLedger(std::string channel, std::optional<std::filesystem::path> data_dir = std::nullopt);

  /// Throws Error(out_of_order) or Error(chain_broken).
  void append_block(Block block);
  /// Validates and commits the most recently appended block.
  const std::vector<ValidationCode>& commit_last(const ValidationPolicy& policy);

  std::uint64_t height() const { return blocks_.size(); }
  const std::vector<Block>& blocks() const { return blocks_; }
  const WorldState& state() const { return state_; }
  const std::string& channel() const { return channel_; }
  std::optional<std::filesystem::path> block_dir() const;

  /// Loads `<dir>/blocks/<channel>/*.blk` in number order.
  static std::vector<Bytes> read_block_files(const std::filesystem::path& data_dir, std::string_view channel);

 private:
  void persist(const Block& block) const;

  std::string channel_;
  std::optional<std::filesystem::path> data_dir_;
  std::vector<Block> blocks_;
  WorldState state_;
};

}  // namespace fleetledger
