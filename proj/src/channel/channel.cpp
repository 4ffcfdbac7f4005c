#include "fleetledger/channel.hpp"

#include <algorithm>

#include "fleetledger/error.hpp"

namespace fleetledger {

bool ChannelConfig::is_member(std::string_view org) const {
  return std::find(member_orgs.begin(), member_orgs.end(), org) != member_orgs.end();
}

Bytes ChannelConfig::serialize() const {
  Encoder e;
  e.str(name).str_list(member_orgs);
  orderer_config.encode(e);
  e.u64(endorsement_policy.required_orgs);
  e.count(anchor_peers.size());
  for (const auto& [org, peer] : anchor_peers) e.str(org).str(peer);
  return std::move(e).take();
}

ChannelConfig ChannelConfig::deserialize(ByteView bytes) {
  Decoder d(bytes);
  ChannelConfig c;
  c.name = d.str();
  c.member_orgs = d.str_list();
  c.orderer_config = OrdererConfig::decode(d);
  c.endorsement_policy.required_orgs = static_cast<std::uint32_t>(d.u64());
  const auto n = d.count();
  for (std::size_t i = 0; i < n; ++i) {
    auto org = d.str();
    c.anchor_peers.emplace(std::move(org), d.str());
  }
  d.expect_done();
  return c;
}

Channel::Channel(ChannelConfig config, const TrustedRoots& all_roots) : config_(std::move(config)) {
  if (config_.name.empty()) throw Error(ErrorCode::rejected_empty_id, "channel name must be non-empty");
  if (config_.member_orgs.empty()) throw Error(ErrorCode::invalid_argument, "channel needs at least one member org");
  config_.orderer_config.validate();
  for (const auto& org : config_.member_orgs) {
    auto it = all_roots.find(org);
    if (it == all_roots.end()) throw Error(ErrorCode::unknown_org, org);
    member_roots_.emplace(org, it->second);
  }
  rebuild_policy();
}

void Channel::set_anchor_peer(const std::string& org, const std::string& peer_id, const std::string& peer_org) {
  if (!is_member(org)) throw Error(ErrorCode::not_a_member, org + " is not a member of " + name());
  if (peer_org != org) throw Error(ErrorCode::not_a_member, peer_id + " does not belong to " + org);
  config_.anchor_peers[org] = peer_id;
}

void Channel::approve(const std::string& org, const ChaincodeDefinition& definition) {
  if (!is_member(org)) throw Error(ErrorCode::not_a_member, org + " cannot approve on " + name());
  if (definition.name.empty()) throw Error(ErrorCode::rejected_empty_id, "chaincode name must be non-empty");
  const auto* current = committed(definition.name);
  const std::uint64_t next_sequence = current ? current->sequence + 1 : 1;
  if (definition.sequence != next_sequence) {
    throw Error(ErrorCode::invalid_argument, "chaincode " + definition.name + " expects sequence " +
                                                 std::to_string(next_sequence));
  }
  auto it = pending_.find(definition.name);
  if (it == pending_.end() || it->second.version != definition.version ||
      it->second.sequence != definition.sequence ||
      it->second.endorsement_policy != definition.endorsement_policy) {
    ChaincodeDefinition fresh = definition;
    fresh.approvals.clear();
    fresh.committed = false;
    it = pending_.insert_or_assign(definition.name, std::move(fresh)).first;
  }
  it->second.approvals.insert(org);
}

const ChaincodeDefinition& Channel::commit(const std::string& chaincode) {
  auto it = pending_.find(chaincode);
  if (it == pending_.end()) {
    throw Error(ErrorCode::insufficient_approvals, chaincode + " has no approved definition");
  }
  if (it->second.approvals.size() < required_approvals()) {
    throw Error(ErrorCode::insufficient_approvals,
                chaincode + " has " + std::to_string(it->second.approvals.size()) + " of " +
                    std::to_string(required_approvals()) + " required approvals");
  }
  auto def = std::move(it->second);
  pending_.erase(it);
  def.committed = true;
  auto& slot = committed_.insert_or_assign(def.name, std::move(def)).first->second;
  rebuild_policy();
  return slot;
}

bool Channel::is_committed(std::string_view chaincode) const { return committed(chaincode) != nullptr; }

const ChaincodeDefinition* Channel::committed(std::string_view chaincode) const {
  auto it = committed_.find(chaincode);
  return it == committed_.end() ? nullptr : &it->second;
}

const ChaincodeDefinition* Channel::pending(std::string_view chaincode) const {
  auto it = pending_.find(chaincode);
  return it == pending_.end() ? nullptr : &it->second;
}

void Channel::rebuild_policy() {
  policy_.member_roots = member_roots_;
  policy_.chaincodes.clear();
  for (const auto& [name, def] : committed_) {
    const auto& policy = def.endorsement_policy.value_or(config_.endorsement_policy);
    policy_.chaincodes.emplace(name, policy.required(config_.member_orgs.size()));
  }
}

}  // namespace fleetledger
