#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fleetledger/channel.hpp"
#include "fleetledger/client.hpp"
#include "fleetledger/executor.hpp"
#include "fleetledger/identity.hpp"
#include "fleetledger/orderer.hpp"
#include "fleetledger/peer.hpp"

namespace fleetledger {

struct OrgSpec {
  std::string id;
  std::vector<std::string> peers;
};

struct ChaincodeSpec {
  std::string name;
  std::string version = "1.0";
  std::vector<std::string> approve;  // orgs that approve during bring-up
  bool commit = true;
};

struct ChannelSpec {
  std::string name;
  std::vector<std::string> orgs;
  OrdererConfig orderer;
  std::vector<ChaincodeSpec> chaincodes;
};

/// Extra identity issued at bring-up, e.g. org admins and robot recorders.
struct IdentitySpec {
  std::string org;
  std::string subject;
  Role role = Role::client;
};

struct NetworkSpec {
  std::string orderer_id = "orderer.example.com";
  std::string orderer_org = "OrdererOrg";
  std::vector<OrgSpec> orgs;
  /// Client identity used by the gateway and web facade, issued by the
  /// first org.
  std::string gateway_client_id = "webapp";
  std::vector<IdentitySpec> identities;
  std::vector<ChannelSpec> channels;
  std::optional<Hash> seed;  // deterministic keys when set
  std::optional<std::filesystem::path> data_dir;

  /// One orderer, Org1 and Org2 with one peer each.
  static NetworkSpec default_spec();
};

OrdererConfig orderer_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const OrdererConfig& c);
/// Throws Error(invalid_argument) on schema violations.
NetworkSpec network_spec_from_json(const nlohmann::json& j);
NetworkSpec load_network_spec(const std::filesystem::path& file);

/// A running network: CAs, orderer, peers, channels. Confined to the
/// executor it was brought up on.
class Network {
 public:
  /// CAs for every org, identities for the orderer, each peer and the
  /// gateway client. Throws Error(invalid_argument) for an empty spec and
  /// Error(duplicate_org) for repeated org ids.
  static std::unique_ptr<Network> bring_up(Executor& executor, NetworkSpec spec);

  ~Network();
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  /// Creates the genesis block and the orderer-side ledger. Throws
  /// Error(duplicate_channel) or Error(unknown_org).
  const Channel& create_channel(const std::string& name, const std::vector<std::string>& member_orgs,
                                OrdererConfig config, EndorsementPolicy policy = {});
  void join_peer(const std::string& channel, const std::string& peer_id);
  void set_anchor_peer(const std::string& channel, const std::string& org, const std::string& peer_id);

  void install_chaincode(const std::string& peer_id, std::shared_ptr<const Contract> contract);
  void approve_chaincode(const std::string& channel, const std::string& org, const ChaincodeDefinition& definition);
  const ChaincodeDefinition& commit_chaincode(const std::string& channel, const std::string& name);

  /// Channel creation, joins, anchor peers, and install/approve/commit of
  /// each contract by every member org.
  void deploy_channel(const std::string& channel, const std::vector<std::string>& member_orgs, OrdererConfig config,
                      const std::vector<std::shared_ptr<const Contract>>& contracts);
  /// Creates every channel in the spec and runs its chaincode lifecycle
  /// with the given implementations (looked up by name).
  void apply_channel_specs(const std::vector<std::shared_ptr<const Contract>>& implementations);

  /// Throws Error(unknown_org) or Error(duplicate_subject).
  Identity issue_identity(const std::string& org, const std::string& subject_id, Role role);

  /// Endorsing peers (one per member org), the peer a client of
  /// `client_org` listens on, and the endorsement count the policy needs.
  struct Route {
    std::vector<Peer*> endorsers;
    Peer* event_peer = nullptr;
    std::uint32_t required = 0;
  };
  Route route(const std::string& channel, std::string_view client_org);

  /// In-process client endorsing at one peer per member org and listening
  /// on a peer of the identity's own org (or the first member peer).
  std::unique_ptr<ChannelClient> client(const Identity& identity, const std::string& channel,
                                        std::optional<Bytes> nonce_salt = std::nullopt);

  Executor& executor() { return executor_; }
  Orderer& orderer() { return *orderer_; }
  Peer& peer(const std::string& id);
  std::vector<Peer*> peers();
  /// Joined peers of a channel, one entry per peer.
  std::vector<Peer*> channel_peers(const std::string& channel);
  bool has_channel(std::string_view name) const;
  const Channel& channel(const std::string& name) const;
  std::vector<std::string> channel_names() const;
  const TrustedRoots& trusted_roots() const { return roots_; }
  const Identity& gateway_identity() const { return gateway_identity_; }
  const std::vector<Identity>& issued_identities() const { return issued_; }
  const NetworkSpec& spec() const { return spec_; }
  std::vector<std::string> org_ids() const;

 private:
  Network(Executor& executor, NetworkSpec spec);
  std::shared_ptr<Channel> mutable_channel(const std::string& name);
  CertificateAuthority& ca(const std::string& org);

  Executor& executor_;
  NetworkSpec spec_;
  std::map<std::string, CertificateAuthority, std::less<>> cas_;
  TrustedRoots roots_;
  std::vector<Identity> issued_;
  Identity gateway_identity_;
  std::unique_ptr<Orderer> orderer_;
  std::map<std::string, std::unique_ptr<Peer>, std::less<>> peers_;
  std::map<std::string, std::shared_ptr<Channel>, std::less<>> channels_;
};

}  // namespace fleetledger
