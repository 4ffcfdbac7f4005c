#include "fleetledger/network.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "fleetledger/error.hpp"

namespace fleetledger {

NetworkSpec NetworkSpec::default_spec() {
  NetworkSpec spec;
  spec.orgs = {{"Org1", {"peer0.org1"}}, {"Org2", {"peer0.org2"}}};
  return spec;
}

namespace {

[[noreturn]] void bad_spec(const std::string& what) { throw Error(ErrorCode::invalid_argument, "network spec: " + what); }

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    bad_spec(std::string("field '") + key + "': " + e.what());
  }
}

const nlohmann::json& array_at(const nlohmann::json& j, const char* key) {
  const auto& a = j.at(key);
  if (!a.is_array()) bad_spec(std::string("'") + key + "' must be an array");
  for (const auto& item : a) {
    if (!item.is_object()) bad_spec(std::string("entries of '") + key + "' must be objects");
  }
  return a;
}

}  // namespace

OrdererConfig orderer_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) bad_spec("orderer section must be an object");
  OrdererConfig c;
  c.batch_timeout = seconds_to_duration(get_or<double>(j, "batch_timeout_s", to_seconds(c.batch_timeout)));
  c.max_message_count = get_or<std::uint32_t>(j, "max_message_count", c.max_message_count);
  c.max_batch_bytes = get_or<std::uint64_t>(j, "max_batch_bytes", c.max_batch_bytes);
  c.validate();
  return c;
}

nlohmann::json to_json(const OrdererConfig& c) {
  return {{"batch_timeout_s", to_seconds(c.batch_timeout)},
          {"max_message_count", c.max_message_count},
          {"max_batch_bytes", c.max_batch_bytes}};
}

NetworkSpec network_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) bad_spec("top level must be an object");
  NetworkSpec spec;
  spec.orgs.clear();
  if (j.contains("orderer")) {
    const auto& o = j.at("orderer");
    spec.orderer_id = get_or<std::string>(o, "id", spec.orderer_id);
    spec.orderer_org = get_or<std::string>(o, "org", spec.orderer_org);
  }
  spec.gateway_client_id = get_or<std::string>(j, "gateway_client", spec.gateway_client_id);
  if (j.contains("orgs")) {
    for (const auto& o : array_at(j, "orgs")) {
      OrgSpec org;
      org.id = get_or<std::string>(o, "id", "");
      if (org.id.empty()) bad_spec("org without id");
      org.peers = get_or<std::vector<std::string>>(o, "peers", {});
      spec.orgs.push_back(std::move(org));
    }
  }
  if (j.contains("identities")) {
    for (const auto& i : array_at(j, "identities")) {
      IdentitySpec id;
      id.org = get_or<std::string>(i, "org", "");
      id.subject = get_or<std::string>(i, "subject", "");
      if (id.org.empty() || id.subject.empty()) bad_spec("identities need an org and a subject");
      id.role = role_from_string(get_or<std::string>(i, "role", "client"));
      spec.identities.push_back(std::move(id));
    }
  }
  if (j.contains("seed")) spec.seed = hash_from_hex(j.at("seed").get<std::string>());
  if (j.contains("data_dir")) spec.data_dir = std::filesystem::path(j.at("data_dir").get<std::string>());
  if (j.contains("channels")) {
    for (const auto& c : array_at(j, "channels")) {
      ChannelSpec ch;
      ch.name = get_or<std::string>(c, "name", "");
      if (ch.name.empty()) bad_spec("channel without name");
      ch.orgs = get_or<std::vector<std::string>>(c, "orgs", {});
      if (c.contains("orderer")) ch.orderer = orderer_config_from_json(c.at("orderer"));
      if (c.contains("chaincodes")) {
        for (const auto& cc : array_at(c, "chaincodes")) {
          ChaincodeSpec s;
          s.name = get_or<std::string>(cc, "name", "");
          s.version = get_or<std::string>(cc, "version", s.version);
          s.approve = get_or<std::vector<std::string>>(cc, "approve", ch.orgs);
          s.commit = get_or<bool>(cc, "commit", true);
          ch.chaincodes.push_back(std::move(s));
        }
      }
      spec.channels.push_back(std::move(ch));
    }
  }
  return spec;
}

NetworkSpec load_network_spec(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::io_error, "cannot read " + file.string());
  try {
    return network_spec_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    bad_spec(e.what());
  }
}

Network::Network(Executor& executor, NetworkSpec spec) : executor_(executor), spec_(std::move(spec)) {}

Network::~Network() {
  // Peers unsubscribe from the orderer in their destructors.
  peers_.clear();
  orderer_.reset();
}

std::unique_ptr<Network> Network::bring_up(Executor& executor, NetworkSpec spec) {
  if (spec.orgs.empty()) bad_spec("at least one org is required");
  if (spec.orderer_id.empty()) bad_spec("an orderer is required");
  std::set<std::string> org_ids{spec.orderer_org};
  std::set<std::string> node_ids{spec.orderer_id};
  for (const auto& org : spec.orgs) {
    if (org.id.empty()) throw Error(ErrorCode::rejected_empty_id, "org id must be non-empty");
    if (!org_ids.insert(org.id).second) throw Error(ErrorCode::duplicate_org, org.id);
    if (org.peers.empty()) bad_spec("org " + org.id + " needs at least one peer");
    for (const auto& p : org.peers) {
      if (!node_ids.insert(p).second) throw Error(ErrorCode::duplicate_subject, p);
    }
  }

  std::unique_ptr<Network> net(new Network(executor, std::move(spec)));
  const auto& s = net->spec_;
  auto make_ca = [&](const std::string& org) {
    auto ca = s.seed ? CertificateAuthority::create_deterministic(org, *s.seed) : CertificateAuthority::create(org);
    net->roots_.emplace(org, ca.root_public_key());
    net->cas_.emplace(org, std::move(ca));
  };
  make_ca(s.orderer_org);
  for (const auto& org : s.orgs) make_ca(org.id);

  auto orderer_identity = net->issue_identity(s.orderer_org, s.orderer_id, Role::orderer);
  net->orderer_ = std::make_unique<Orderer>(executor, std::move(orderer_identity));
  for (const auto& org : s.orgs) {
    for (const auto& peer_id : org.peers) {
      auto identity = net->issue_identity(org.id, peer_id, Role::peer);
      net->peers_.emplace(peer_id, std::make_unique<Peer>(executor, std::move(identity), s.data_dir));
    }
  }
  net->gateway_identity_ = net->issue_identity(s.orgs.front().id, s.gateway_client_id, Role::client);
  for (const auto& id : s.identities) net->issue_identity(id.org, id.subject, id.role);
  return net;
}

CertificateAuthority& Network::ca(const std::string& org) {
  auto it = cas_.find(org);
  if (it == cas_.end()) throw Error(ErrorCode::unknown_org, org);
  return it->second;
}

Identity Network::issue_identity(const std::string& org, const std::string& subject_id, Role role) {
  auto identity = ca(org).issue(subject_id, role);
  issued_.push_back(identity);
  return identity;
}

std::vector<std::string> Network::org_ids() const {
  std::vector<std::string> out;
  for (const auto& org : spec_.orgs) out.push_back(org.id);
  return out;
}

const Channel& Network::create_channel(const std::string& name, const std::vector<std::string>& member_orgs,
                                       OrdererConfig config, EndorsementPolicy policy) {
  if (channels_.count(name) || orderer_->has_channel(name)) throw Error(ErrorCode::duplicate_channel, name);
  for (const auto& org : member_orgs) {
    if (org == spec_.orderer_org || !cas_.count(org)) throw Error(ErrorCode::unknown_org, org);
  }
  ChannelConfig cfg{name, member_orgs, config, policy, {}};
  auto channel = std::make_shared<Channel>(cfg, roots_);
  auto genesis = make_genesis_block(name, cfg.serialize(), orderer_->identity(), executor_.now());
  orderer_->create_channel(name, config, channel->member_roots(), std::move(genesis));
  return *channels_.emplace(name, std::move(channel)).first->second;
}

std::shared_ptr<Channel> Network::mutable_channel(const std::string& name) {
  auto it = channels_.find(name);
  if (it == channels_.end()) throw Error(ErrorCode::unknown_channel, name);
  return it->second;
}

const Channel& Network::channel(const std::string& name) const {
  auto it = channels_.find(name);
  if (it == channels_.end()) throw Error(ErrorCode::unknown_channel, name);
  return *it->second;
}

bool Network::has_channel(std::string_view name) const { return channels_.find(name) != channels_.end(); }

std::vector<std::string> Network::channel_names() const {
  std::vector<std::string> out;
  for (const auto& [name, ch] : channels_) out.push_back(name);
  return out;
}

Peer& Network::peer(const std::string& id) {
  auto it = peers_.find(id);
  if (it == peers_.end()) throw Error(ErrorCode::unknown_peer, id);
  return *it->second;
}

std::vector<Peer*> Network::peers() {
  std::vector<Peer*> out;
  for (auto& [id, p] : peers_) out.push_back(p.get());
  return out;
}

std::vector<Peer*> Network::channel_peers(const std::string& channel) {
  std::vector<Peer*> out;
  for (auto& [id, p] : peers_) {
    if (p->joined(channel)) out.push_back(p.get());
  }
  return out;
}

void Network::join_peer(const std::string& channel, const std::string& peer_id) {
  auto ch = mutable_channel(channel);
  peer(peer_id).join(ch, *orderer_);
}

void Network::set_anchor_peer(const std::string& channel, const std::string& org, const std::string& peer_id) {
  auto& p = peer(peer_id);
  mutable_channel(channel)->set_anchor_peer(org, peer_id, p.org_id());
}

void Network::install_chaincode(const std::string& peer_id, std::shared_ptr<const Contract> contract) {
  peer(peer_id).install(std::move(contract));
}

void Network::approve_chaincode(const std::string& channel, const std::string& org,
                                const ChaincodeDefinition& definition) {
  mutable_channel(channel)->approve(org, definition);
}

const ChaincodeDefinition& Network::commit_chaincode(const std::string& channel, const std::string& name) {
  return mutable_channel(channel)->commit(name);
}

void Network::deploy_channel(const std::string& channel, const std::vector<std::string>& member_orgs,
                             OrdererConfig config, const std::vector<std::shared_ptr<const Contract>>& contracts) {
  create_channel(channel, member_orgs, config);
  for (const auto& org : spec_.orgs) {
    if (std::find(member_orgs.begin(), member_orgs.end(), org.id) == member_orgs.end()) continue;
    for (const auto& peer_id : org.peers) join_peer(channel, peer_id);
    set_anchor_peer(channel, org.id, org.peers.front());
  }
  for (const auto& contract : contracts) {
    for (auto* p : channel_peers(channel)) p->install(contract);
    const auto* current = this->channel(channel).committed(contract->name());
    ChaincodeDefinition def;
    def.name = std::string(contract->name());
    def.sequence = current ? current->sequence + 1 : 1;
    for (const auto& org : member_orgs) approve_chaincode(channel, org, def);
    commit_chaincode(channel, def.name);
  }
}

void Network::apply_channel_specs(const std::vector<std::shared_ptr<const Contract>>& implementations) {
  for (const auto& ch : spec_.channels) {
    create_channel(ch.name, ch.orgs, ch.orderer);
    for (const auto& org : spec_.orgs) {
      if (std::find(ch.orgs.begin(), ch.orgs.end(), org.id) == ch.orgs.end()) continue;
      for (const auto& peer_id : org.peers) join_peer(ch.name, peer_id);
      set_anchor_peer(ch.name, org.id, org.peers.front());
    }
    for (const auto& cc : ch.chaincodes) {
      auto impl = std::find_if(implementations.begin(), implementations.end(),
                               [&](const auto& c) { return c->name() == cc.name; });
      if (impl == implementations.end()) bad_spec("no implementation for chaincode " + cc.name);
      for (auto* p : channel_peers(ch.name)) p->install(*impl);
      ChaincodeDefinition def;
      def.name = cc.name;
      def.version = cc.version;
      for (const auto& org : cc.approve) approve_chaincode(ch.name, org, def);
      if (cc.commit) commit_chaincode(ch.name, cc.name);
    }
  }
}

Network::Route Network::route(const std::string& channel_name, std::string_view client_org) {
  const auto& ch = channel(channel_name);
  Route r;
  for (const auto& org : ch.config().member_orgs) {
    Peer* chosen = nullptr;
    auto anchor = ch.config().anchor_peers.find(org);
    if (anchor != ch.config().anchor_peers.end()) {
      chosen = &peer(anchor->second);
    } else {
      for (auto* p : channel_peers(channel_name)) {
        if (p->org_id() == org) {
          chosen = p;
          break;
        }
      }
    }
    if (!chosen || !chosen->joined(channel_name)) continue;
    r.endorsers.push_back(chosen);
    if (!r.event_peer || org == client_org) r.event_peer = chosen;
  }
  if (!r.event_peer) throw Error(ErrorCode::unknown_peer, "no joined peer on channel " + channel_name);
  r.required = ch.config().endorsement_policy.required(ch.config().member_orgs.size());
  return r;
}

std::unique_ptr<ChannelClient> Network::client(const Identity& identity, const std::string& channel_name,
                                               std::optional<Bytes> nonce_salt) {
  auto r = route(channel_name, identity.org_id());
  return std::make_unique<ChannelClient>(executor_, identity, channel_name, std::move(r.endorsers), *orderer_,
                                         *r.event_peer, r.required, std::move(nonce_salt));
}

}  // namespace fleetledger
