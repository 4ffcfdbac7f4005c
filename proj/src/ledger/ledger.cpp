#include "fleetledger/ledger.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <sstream>

#include "fleetledger/error.hpp"

namespace fleetledger {

const StateEntry* WorldState::find(std::string_view key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<std::pair<std::string, StateEntry>> WorldState::range(std::string_view prefix) const {
  std::vector<std::pair<std::string, StateEntry>> out;
  for (auto it = entries_.lower_bound(prefix); it != entries_.end(); ++it) {
    if (it->first.compare(0, prefix.size(), prefix) != 0) break;
    out.emplace_back(it->first, it->second);
  }
  return out;
}

void WorldState::apply(const std::vector<WriteItem>& writes, Version version) {
  for (const auto& w : writes) {
    if (w.is_delete) {
      entries_.erase(w.key);
    } else {
      entries_.insert_or_assign(w.key, StateEntry{w.value, version});
    }
  }
}

std::string WorldState::dump() const {
  std::string out;
  for (const auto& [key, entry] : entries_) {
    out += key;
    out += '\t';
    out += to_hex(entry.value);
    out += '\t';
    out += to_string(entry.version);
    out += '\n';
  }
  return out;
}

std::uint32_t majority_of(std::size_t n) { return static_cast<std::uint32_t>(n / 2 + 1); }

namespace {

bool endorsement_satisfied(const Transaction& tx, const ValidationPolicy& policy, std::uint32_t required) {
  const auto payload = tx.endorsement_payload();
  std::set<std::string, std::less<>> orgs;
  for (const auto& en : tx.endorsements) {
    if (en.org_id != en.endorser.org_id || en.endorser.role != Role::peer) continue;
    if (!verify_identity(en.endorser, policy.member_roots)) continue;
    if (!verify_signature(en.endorser, payload, en.signature)) continue;
    orgs.insert(en.org_id);
  }
  return orgs.size() >= required;
}

bool reads_current(const Transaction& tx, const WorldState& state) {
  for (const auto& read : tx.rwset.reads) {
    const auto* entry = state.find(read.key);
    const std::optional<Version> current = entry ? std::optional(entry->version) : std::nullopt;
    if (current != read.version) return false;
  }
  return true;
}

ValidationCode validate_one(const Transaction& tx, const WorldState& state, const ValidationPolicy& policy) {
  if (!verify_identity(tx.creator, policy.member_roots)) return ValidationCode::not_a_member;
  if (!tx.rwset.well_formed() || tx.compute_id() != tx.tx_id ||
      !verify_signature(tx.creator, tx.signed_body(), tx.client_signature)) {
    return ValidationCode::bad_signature;
  }
  if (state.seen_tx(tx.tx_id)) return ValidationCode::duplicate_txid;
  auto cc = policy.chaincodes.find(tx.chaincode);
  if (cc == policy.chaincodes.end()) return ValidationCode::unknown_chaincode;
  if (!endorsement_satisfied(tx, policy, cc->second)) return ValidationCode::endorsement_policy_failure;
  if (!reads_current(tx, state)) return ValidationCode::mvcc_read_conflict;
  return ValidationCode::valid;
}

}  // namespace

std::vector<ValidationCode> validate_and_commit(WorldState& state, Block& block, const ValidationPolicy& policy) {
  if (block.header.number != state.height()) {
    throw Error(ErrorCode::out_of_order, "state at height " + std::to_string(state.height()) +
                                             " cannot commit block " + std::to_string(block.header.number));
  }
  std::vector<ValidationCode> codes;
  codes.reserve(block.transactions.size());
  const bool genesis = block.header.number == 0;
  for (std::size_t i = 0; i < block.transactions.size(); ++i) {
    const auto& tx = block.transactions[i];
    ValidationCode code;
    if (genesis) {
      code = tx.chaincode == kConfigChaincode ? ValidationCode::valid : ValidationCode::unknown_chaincode;
    } else if (tx.chaincode == kConfigChaincode) {
      code = ValidationCode::unknown_chaincode;
    } else {
      code = validate_one(tx, state, policy);
    }
    if (code != ValidationCode::duplicate_txid) state.mark_seen(tx.tx_id);
    if (code == ValidationCode::valid && !genesis) {
      state.apply(tx.rwset.writes, Version{block.header.number, static_cast<std::uint32_t>(i)});
    }
    codes.push_back(code);
  }
  state.set_height(block.header.number + 1);
  block.validation_codes = codes;
  return codes;
}

namespace {

std::string check_link(const Block& block, std::uint64_t expected_number, const Block* prev) {
  if (block.header.number != expected_number) {
    return "expected block " + std::to_string(expected_number) + ", found " + std::to_string(block.header.number);
  }
  if (block.transactions.empty()) return "block carries no transactions";
  if (Block::compute_data_hash(block.transactions) != block.header.data_hash) return "data hash mismatch";
  if (!block.validation_codes.empty() && block.validation_codes.size() != block.transactions.size()) {
    return "validation code count mismatch";
  }
  const Hash expected_prev = prev ? prev->header.hash() : Hash{};
  if (block.header.prev_hash != expected_prev) return "prev_hash does not match previous header";
  return {};
}

}  // namespace

ChainCheck verify_chain(const std::vector<Block>& blocks) {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    auto reason = check_link(blocks[i], i, i ? &blocks[i - 1] : nullptr);
    if (!reason.empty()) return ChainCheck{false, i, std::move(reason)};
  }
  return {};
}

ChainCheck verify_chain_files(const std::vector<Bytes>& stored) {
  std::vector<Block> blocks;
  blocks.reserve(stored.size());
  for (std::size_t i = 0; i < stored.size(); ++i) {
    try {
      blocks.push_back(decode_block_file(stored[i]));
    } catch (const Error& e) {
      return ChainCheck{false, i, e.what()};
    }
    auto reason = check_link(blocks[i], i, i ? &blocks[i - 1] : nullptr);
    if (!reason.empty()) return ChainCheck{false, i, std::move(reason)};
  }
  return {};
}

WorldState replay(const std::vector<Block>& blocks, const ValidationPolicy& policy) {
  const auto check = verify_chain(blocks);
  if (!check.ok) {
    throw Error(ErrorCode::chain_broken, "at block " + std::to_string(check.broken_at) + ": " + check.reason);
  }
  WorldState state;
  for (const auto& original : blocks) {
    Block block = original;
    validate_and_commit(state, block, policy);
  }
  return state;
}

std::optional<StateEntry> query_state(const WorldState& state, std::string_view key) {
  const auto* entry = state.find(key);
  if (!entry) return std::nullopt;
  return *entry;
}

std::vector<std::pair<std::string, StateEntry>> range_query(const WorldState& state, std::string_view prefix) {
  return state.range(prefix);
}

ChannelLedger::ChannelLedger(std::string channel, std::optional<std::filesystem::path> data_dir)
    : channel_(std::move(channel)), data_dir_(std::move(data_dir)) {}

std::optional<std::filesystem::path> ChannelLedger::block_dir() const {
  if (!data_dir_) return std::nullopt;
  return *data_dir_ / "blocks" / channel_;
}

void ChannelLedger::append_block(Block block) {
  if (block.header.number != height()) {
    throw Error(ErrorCode::out_of_order, "ledger at height " + std::to_string(height()) + " got block " +
                                             std::to_string(block.header.number));
  }
  auto reason = check_link(block, height(), blocks_.empty() ? nullptr : &blocks_.back());
  if (!reason.empty()) {
    throw Error(ErrorCode::chain_broken, "block " + std::to_string(block.header.number) + ": " + reason);
  }
  block.validation_codes.clear();
  blocks_.push_back(std::move(block));
}

const std::vector<ValidationCode>& ChannelLedger::commit_last(const ValidationPolicy& policy) {
  if (blocks_.empty() || state_.height() != blocks_.size() - 1) {
    throw Error(ErrorCode::out_of_order, "no uncommitted block");
  }
  auto& block = blocks_.back();
  validate_and_commit(state_, block, policy);
  persist(block);
  return block.validation_codes;
}

void ChannelLedger::persist(const Block& block) const {
  const auto dir = block_dir();
  if (!dir) return;
  std::filesystem::create_directories(*dir);
  const auto path = *dir / (std::to_string(block.header.number) + ".blk");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  const auto bytes = encode_block_file(block);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<Bytes> ChannelLedger::read_block_files(const std::filesystem::path& data_dir, std::string_view channel) {
  const auto dir = data_dir / "blocks" / std::string(channel);
  std::vector<Bytes> out;
  for (std::uint64_t n = 0;; ++n) {
    const auto path = dir / (std::to_string(n) + ".blk");
    std::ifstream in(path, std::ios::binary);
    if (!in) break;
    out.emplace_back((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  }
  return out;
}

}  // namespace fleetledger
