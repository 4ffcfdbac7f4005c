#include <algorithm>

#include "fleetledger/chaincode.hpp"

namespace fleetledger {

ChaincodeStub::ChaincodeStub(const WorldState& snapshot, std::string key_prefix, const Certificate& creator,
                             std::vector<std::string> channel_members)
    : snapshot_(snapshot), prefix_(std::move(key_prefix)), creator_(creator), members_(std::move(channel_members)) {}

void ChaincodeStub::guard(std::string_view key) const {
  if (key.substr(0, prefix_.size()) != prefix_) {
    throw ContractError("key '" + std::string(key) + "' is outside namespace '" + prefix_ + "'");
  }
}

std::optional<Bytes> ChaincodeStub::get(std::string_view key) {
  guard(key);
  const auto* entry = snapshot_.find(key);
  reads_.try_emplace(std::string(key), entry ? std::optional(entry->version) : std::nullopt);
  if (!entry) return std::nullopt;
  return entry->value;
}

void ChaincodeStub::put(std::string_view key, Bytes value) {
  guard(key);
  writes_.insert_or_assign(std::string(key), WriteItem{std::string(key), std::move(value), false});
}

void ChaincodeStub::del(std::string_view key) {
  guard(key);
  writes_.insert_or_assign(std::string(key), WriteItem{std::string(key), {}, true});
}

std::vector<std::pair<std::string, Bytes>> ChaincodeStub::range(std::string_view prefix) {
  guard(prefix);
  std::vector<std::pair<std::string, Bytes>> out;
  for (auto& [key, entry] : snapshot_.range(prefix)) {
    reads_.try_emplace(key, entry.version);
    out.emplace_back(key, std::move(entry.value));
  }
  return out;
}

bool ChaincodeStub::is_channel_member(std::string_view org) const {
  return std::find(members_.begin(), members_.end(), org) != members_.end();
}

RwSet ChaincodeStub::take_rwset() const {
  RwSet rw;
  for (const auto& [key, version] : reads_) rw.reads.push_back(ReadItem{key, version});
  for (const auto& [key, write] : writes_) rw.writes.push_back(write);
  return rw;
}

}  // namespace fleetledger
