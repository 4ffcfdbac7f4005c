#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fleetledger/identity.hpp"
#include "fleetledger/ledger.hpp"
#include "fleetledger/orderer.hpp"

namespace fleetledger {

/// MajorityOrgs by default; `required_orgs` > 0 pins an explicit count.
struct EndorsementPolicy {
  std::uint32_t required_orgs = 0;

  std::uint32_t required(std::size_t member_count) const {
    return required_orgs > 0 ? required_orgs : majority_of(member_count);
  }
  bool operator==(const EndorsementPolicy&) const = default;
};

struct ChannelConfig {
  std::string name;
  std::vector<std::string> member_orgs;
  OrdererConfig orderer_config;
  EndorsementPolicy endorsement_policy;
  std::map<std::string, std::string> anchor_peers;  // org -> peer

  bool is_member(std::string_view org) const;
  Bytes serialize() const;
  static ChannelConfig deserialize(ByteView bytes);
  bool operator==(const ChannelConfig&) const = default;
};

struct ChaincodeDefinition {
  std::string name;
  std::string version = "1.0";
  std::uint64_t sequence = 1;
  std::optional<EndorsementPolicy> endorsement_policy;
  std::set<std::string> approvals;
  bool committed = false;
};

/// A channel's configuration plus its chaincode lifecycle state.
class Channel {
 public:
  Channel(ChannelConfig config, const TrustedRoots& all_roots);

  const std::string& name() const { return config_.name; }
  const ChannelConfig& config() const { return config_; }
  const TrustedRoots& member_roots() const { return member_roots_; }
  bool is_member(std::string_view org) const { return config_.is_member(org); }

  /// Throws Error(not_a_member) if org or peer's org is not a member.
  void set_anchor_peer(const std::string& org, const std::string& peer_id, const std::string& peer_org);

  /// Records `org`'s approval of `definition` at the next sequence number.
  void approve(const std::string& org, const ChaincodeDefinition& definition);
  /// Commits the pending definition once a majority approved it. Throws
  /// Error(insufficient_approvals) otherwise.
  const ChaincodeDefinition& commit(const std::string& name);

  bool is_committed(std::string_view chaincode) const;
  const ChaincodeDefinition* committed(std::string_view chaincode) const;
  const ChaincodeDefinition* pending(std::string_view chaincode) const;
  std::uint32_t required_approvals() const { return majority_of(config_.member_orgs.size()); }

  const ValidationPolicy& validation_policy() const { return policy_; }

 private:
  void rebuild_policy();

  ChannelConfig config_;
  TrustedRoots member_roots_;
  std::map<std::string, ChaincodeDefinition, std::less<>> committed_;
  std::map<std::string, ChaincodeDefinition, std::less<>> pending_;
  ValidationPolicy policy_;
};

}  // namespace fleetledger
