#include "fleetledger/peer.hpp"

#include <spdlog/spdlog.h>

#include "fleetledger/crypto.hpp"
#include "fleetledger/error.hpp"

namespace fleetledger {

namespace {

void encode_proposal_fields(Encoder& e, const Proposal& p) {
  e.str(p.channel).str(p.chaincode).str(p.function).str_list(p.args);
  p.creator.encode(e);
  e.bytes(p.nonce);
}

}  // namespace

Bytes Proposal::signed_bytes() const {
  Encoder e;
  e.str("proposal");
  encode_proposal_fields(e, *this);
  return std::move(e).take();
}

Hash Proposal::tx_id_for(const RwSet& rwset) const {
  Transaction tx;
  tx.channel = channel;
  tx.chaincode = chaincode;
  tx.function = function;
  tx.args = args;
  tx.creator = creator;
  tx.nonce = nonce;
  tx.rwset = rwset;
  return tx.compute_id();
}

void Proposal::encode(Encoder& e) const {
  encode_proposal_fields(e, *this);
  e.bytes(client_signature);
}

Proposal Proposal::decode(Decoder& d) {
  Proposal p;
  p.channel = d.str();
  p.chaincode = d.str();
  p.function = d.str();
  p.args = d.str_list();
  p.creator = Certificate::decode(d);
  p.nonce = d.bytes();
  p.client_signature = d.bytes();
  return p;
}

Proposal make_proposal(const Identity& client, std::string channel, std::string chaincode, std::string function,
                       std::vector<std::string> args, Bytes nonce) {
  Proposal p;
  p.channel = std::move(channel);
  p.chaincode = std::move(chaincode);
  p.function = std::move(function);
  p.args = std::move(args);
  p.creator = client.certificate();
  p.nonce = std::move(nonce);
  p.client_signature = client.sign(p.signed_bytes());
  return p;
}

void ProposalResponse::encode(Encoder& e) const {
  e.boolean(ok).str(error).hash(tx_id);
  rwset.encode(e);
  e.bytes(payload);
  endorser.encode(e);
  e.bytes(endorser_signature);
}

ProposalResponse ProposalResponse::decode(Decoder& d) {
  ProposalResponse r;
  r.ok = d.boolean();
  r.error = d.str();
  r.tx_id = d.hash();
  r.rwset = RwSet::decode(d);
  r.payload = d.bytes();
  r.endorser = Certificate::decode(d);
  r.endorser_signature = d.bytes();
  return r;
}

void CommitEvent::encode(Encoder& e) const {
  e.str(channel).u64(block_no).hash(tx_id).u64(static_cast<std::uint64_t>(code)).i64(commit_time.count());
}

CommitEvent CommitEvent::decode(Decoder& d) {
  CommitEvent ev;
  ev.channel = d.str();
  ev.block_no = d.u64();
  ev.tx_id = d.hash();
  const auto code = d.u64();
  if (code > static_cast<std::uint64_t>(ValidationCode::not_a_member)) {
    throw Error(ErrorCode::decode_error, "bad validation code");
  }
  ev.code = static_cast<ValidationCode>(code);
  ev.commit_time = Timestamp(d.i64());
  return ev;
}

Transaction assemble_transaction(const Proposal& proposal, const std::vector<ProposalResponse>& responses,
                                 const Identity& client, Timestamp submit_time) {
  if (responses.empty()) throw Error(ErrorCode::insufficient_endorsements, "no endorsements");
  for (const auto& r : responses) {
    if (!r.ok) throw Error(ErrorCode::contract_error, r.error);
  }
  const auto& first = responses.front();
  for (const auto& r : responses) {
    if (r.rwset != first.rwset || r.payload != first.payload || r.tx_id != first.tx_id) {
      throw Error(ErrorCode::endorsement_divergence,
                  "endorsers " + first.endorser.subject_id + " and " + r.endorser.subject_id + " disagree");
    }
  }
  Transaction tx;
  tx.channel = proposal.channel;
  tx.chaincode = proposal.chaincode;
  tx.function = proposal.function;
  tx.args = proposal.args;
  tx.creator = proposal.creator;
  tx.nonce = proposal.nonce;
  tx.rwset = first.rwset;
  tx.response_payload = first.payload;
  tx.tx_id = tx.compute_id();
  for (const auto& r : responses) {
    tx.endorsements.push_back(Endorsement{r.endorser.org_id, r.endorser, r.endorser_signature});
  }
  tx.submit_time = submit_time;
  tx.client_signature = client.sign(tx.signed_body());
  return tx;
}

Peer::Peer(Executor& executor, Identity identity, std::optional<std::filesystem::path> data_dir)
    : executor_(executor), identity_(std::move(identity)), data_dir_(std::move(data_dir)) {}

Peer::~Peer() {
  *alive_ = false;
  for (auto& [name, s] : channels_) {
    if (s.subscription && s.orderer) s.orderer->cancel_delivery(*s.subscription);
  }
}

void Peer::install(std::shared_ptr<const Contract> contract) {
  installed_.insert_or_assign(std::string(contract->name()), std::move(contract));
}

bool Peer::is_installed(std::string_view name) const { return installed_.find(name) != installed_.end(); }

Peer::ChannelSlot& Peer::slot(const std::string& channel) {
  auto it = channels_.find(channel);
  if (it == channels_.end()) throw Error(ErrorCode::unknown_channel, id() + " has not joined " + channel);
  return it->second;
}

const Peer::ChannelSlot& Peer::slot(const std::string& channel) const {
  auto it = channels_.find(channel);
  if (it == channels_.end()) throw Error(ErrorCode::unknown_channel, id() + " has not joined " + channel);
  return it->second;
}

void Peer::join(std::shared_ptr<const Channel> channel, Orderer& orderer) {
  if (!channel->is_member(org_id())) {
    throw Error(ErrorCode::not_a_member, org_id() + " is not a member of " + channel->name());
  }
  const auto name = channel->name();
  auto it = channels_.find(name);
  if (it != channels_.end() && it->second.subscription) return;  // already joined and live
  if (it == channels_.end()) {
    auto ledger_dir = data_dir_ ? std::optional(*data_dir_ / id()) : std::nullopt;
    it = channels_.emplace(name, ChannelSlot{}).first;
    it->second.ledger = std::make_unique<ChannelLedger>(name, std::move(ledger_dir));
  }
  auto& s = it->second;
  s.channel = std::move(channel);
  s.orderer = &orderer;
  s.halted = false;
  s.subscription = orderer.deliver(name, s.ledger->height(), [this, name, alive = alive_](const Block& block) {
    if (*alive) process_block(name, block);
  });
}

void Peer::leave(const std::string& channel, bool wipe) {
  auto it = channels_.find(channel);
  if (it == channels_.end()) return;
  if (it->second.subscription && it->second.orderer) it->second.orderer->cancel_delivery(*it->second.subscription);
  it->second.subscription.reset();
  if (!wipe) return;
  if (auto dir = it->second.ledger->block_dir()) {
    std::error_code ec;
    std::filesystem::remove_all(*dir, ec);
  }
  channels_.erase(it);
}

bool Peer::joined(std::string_view channel) const {
  auto it = channels_.find(channel);
  return it != channels_.end() && it->second.subscription.has_value();
}

const ChannelLedger& Peer::ledger(const std::string& channel) const { return *slot(channel).ledger; }

bool Peer::halted(const std::string& channel) const { return slot(channel).halted; }

const Contract& Peer::runnable_contract(const ChannelSlot& s, const std::string& chaincode) const {
  if (!s.channel->is_committed(chaincode)) {
    throw Error(ErrorCode::unknown_chaincode, chaincode + " is not committed on " + s.channel->name());
  }
  auto it = installed_.find(chaincode);
  if (it == installed_.end()) throw Error(ErrorCode::unknown_chaincode, chaincode + " is not installed on " + id());
  return *it->second;
}

ProposalResponse Peer::endorse(const Proposal& proposal) {
  CpuMeter::Scope scope(cpu_);
  auto& s = slot(proposal.channel);
  if (!verify_identity(proposal.creator, s.channel->member_roots())) {
    throw Error(ErrorCode::not_a_member, proposal.creator.subject_id + " is not a member of " + proposal.channel);
  }
  if (!verify_signature(proposal.creator, proposal.signed_bytes(), proposal.client_signature)) {
    throw Error(ErrorCode::invalid_argument, "proposal signature does not verify");
  }
  const auto& contract = runnable_contract(s, proposal.chaincode);

  ProposalResponse response;
  response.endorser = identity_.certificate();
  ChaincodeStub stub(s.ledger->state(), std::string(contract.key_prefix()), proposal.creator,
                     s.channel->config().member_orgs);
  try {
    response.payload = contract.invoke(stub, proposal.function, proposal.args);
    response.rwset = stub.take_rwset();
    response.ok = true;
  } catch (const ContractError& e) {
    response.ok = false;
    response.error = e.what();
    response.payload = to_bytes(e.what());
  }
  response.tx_id = proposal.tx_id_for(response.rwset);
  response.endorser_signature =
      identity_.sign(Transaction::endorsement_payload(response.tx_id, response.rwset, response.payload));
  return response;
}

Bytes Peer::query(const std::string& channel, const std::string& chaincode, const std::string& function,
                  const std::vector<std::string>& args) {
  CpuMeter::Scope scope(cpu_);
  auto& s = slot(channel);
  const auto& contract = runnable_contract(s, chaincode);
  ChaincodeStub stub(s.ledger->state(), std::string(contract.key_prefix()), identity_.certificate(),
                     s.channel->config().member_orgs);
  return contract.invoke(stub, function, args);
}

Peer::ListenerId Peer::on_commit(const std::string& channel, CommitListener listener) {
  const auto id = next_listener_++;
  commit_listeners_.emplace(id, std::make_pair(channel, std::move(listener)));
  return id;
}

Peer::ListenerId Peer::on_block(const std::string& channel, BlockListener listener) {
  const auto id = next_listener_++;
  block_listeners_.emplace(id, std::make_pair(channel, std::move(listener)));
  return id;
}

void Peer::remove_listener(ListenerId id) {
  commit_listeners_.erase(id);
  block_listeners_.erase(id);
}

void Peer::process_block(const std::string& channel, const Block& block) {
  std::vector<CommitEvent> events;
  const Block* committed = nullptr;
  {
    CpuMeter::Scope scope(cpu_);
    auto& s = slot(channel);
    if (s.halted) return;
    try {
      s.ledger->append_block(block);
    } catch (const Error& e) {
      s.halted = true;
      if (s.subscription && s.orderer) s.orderer->cancel_delivery(*s.subscription);
      s.subscription.reset();
      spdlog::error("peer {} halted channel {}: {}", id(), channel, e.what());
      if (halt_listener_) halt_listener_(channel, e.what());
      return;
    }
    const auto& codes = s.ledger->commit_last(s.channel->validation_policy());
    committed = &s.ledger->blocks().back();
    const auto now = executor_.now();
    events.reserve(codes.size());
    for (std::size_t i = 0; i < codes.size(); ++i) {
      events.push_back(CommitEvent{channel, block.header.number, committed->transactions[i].tx_id, codes[i], now});
    }
  }
  // Copy listeners: callbacks may register or remove listeners.
  if (!block_listeners_.empty()) {
    const Block snapshot = *committed;
    auto block_listeners = block_listeners_;
    for (const auto& [lid, entry] : block_listeners) {
      if (entry.first == channel && block_listeners_.count(lid)) entry.second(snapshot);
    }
  }
  for (const auto& ev : events) {
    auto listeners = commit_listeners_;
    for (const auto& [lid, entry] : listeners) {
      if (entry.first == channel && commit_listeners_.count(lid)) entry.second(ev);
    }
  }
}

}  // namespace fleetledger
