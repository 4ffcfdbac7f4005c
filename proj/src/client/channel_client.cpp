#include <spdlog/spdlog.h>

#include "fleetledger/client.hpp"
#include "fleetledger/crypto.hpp"
#include "fleetledger/error.hpp"

namespace fleetledger {

Bytes NonceSource::next() {
  Encoder e;
  e.bytes(salt_).u64(counter_++);
  const auto h = crypto::sha256(e.data());
  return Bytes(h.begin(), h.begin() + 16);
}

ChannelClient::ChannelClient(Executor& executor, Identity identity, std::string channel, std::vector<Peer*> endorsers,
                             Orderer& orderer, Peer& event_peer, std::uint32_t required_endorsements,
                             std::optional<Bytes> nonce_salt)
    : executor_(executor),
      identity_(std::move(identity)),
      channel_(std::move(channel)),
      endorsers_(std::move(endorsers)),
      orderer_(orderer),
      event_peer_(event_peer),
      required_(required_endorsements),
      nonces_(nonce_salt ? std::move(*nonce_salt) : crypto::random_bytes(16)) {
  listener_ = event_peer_.on_commit(channel_, [this, alive = alive_](const CommitEvent& ev) {
    if (*alive) on_event(ev);
  });
}

ChannelClient::~ChannelClient() {
  *alive_ = false;
  event_peer_.remove_listener(listener_);
}

namespace {

std::optional<ValidationCode> code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::unknown_chaincode: return ValidationCode::unknown_chaincode;
    case ErrorCode::not_a_member: return ValidationCode::not_a_member;
    default: return std::nullopt;
  }
}

}  // namespace

Transaction ChannelClient::prepare(const Invocation& inv, Timestamp submit_time) {
  auto proposal = make_proposal(identity_, channel_, inv.chaincode, inv.function, inv.args, nonces_.next());
  std::vector<ProposalResponse> responses;
  for (auto* peer : endorsers_) responses.push_back(peer->endorse(proposal));
  for (const auto& r : responses) {
    if (!r.ok) throw Error(ErrorCode::contract_error, r.error);
  }
  if (responses.size() < required_) {
    throw Error(ErrorCode::insufficient_endorsements,
                std::to_string(responses.size()) + " of " + std::to_string(required_) + " endorsements");
  }
  return assemble_transaction(proposal, responses, identity_, submit_time);
}

void ChannelClient::submit(const Invocation& inv, SubmitHandler on_committed, AcceptHandler on_accepted,
                           std::optional<Timestamp> submit_time) {
  SubmitOutcome outcome;
  outcome.submit_time = submit_time.value_or(executor_.now());
  auto fail = [&](std::string error, std::optional<ValidationCode> code) {
    outcome.error = std::move(error);
    outcome.code = code;
    executor_.post([outcome, on_committed, on_accepted] {
      if (on_accepted) on_accepted(outcome);
      if (on_committed) on_committed(outcome);
    });
  };

  Transaction tx;
  try {
    tx = prepare(inv, outcome.submit_time);
  } catch (const Error& e) {
    spdlog::debug("client {}: {} failed before ordering: {}", identity_.subject_id(), inv.function, e.what());
    fail(e.what(), code_for(e.code()));
    return;
  }
  outcome.tx_id = tx.tx_id;
  outcome.payload = tx.response_payload;
  const auto tx_id = tx.tx_id;
  pending_[tx_id] = Pending{std::move(on_committed), outcome.submit_time, tx.response_payload};

  const auto status = orderer_.submit(std::move(tx));
  if (status != SubmitStatus::accepted) {
    auto handler = std::move(pending_[tx_id].handler);
    pending_.erase(tx_id);
    outcome.error = std::string(to_string(status));
    if (status == SubmitStatus::not_a_member) outcome.code = ValidationCode::not_a_member;
    executor_.post([outcome, handler, on_accepted] {
      if (on_accepted) on_accepted(outcome);
      if (handler) handler(outcome);
    });
    return;
  }
  outcome.ordered = true;
  if (on_accepted) executor_.post([outcome, on_accepted] { on_accepted(outcome); });
}

void ChannelClient::on_event(const CommitEvent& ev) {
  auto it = pending_.find(ev.tx_id);
  if (it == pending_.end()) return;
  auto pending = std::move(it->second);
  pending_.erase(it);
  SubmitOutcome outcome;
  outcome.tx_id = ev.tx_id;
  outcome.ordered = true;
  outcome.code = ev.code;
  outcome.payload = std::move(pending.payload);
  outcome.submit_time = pending.submit_time;
  outcome.commit_time = ev.commit_time;
  outcome.block_no = ev.block_no;
  if (pending.handler) pending.handler(outcome);
}

void ChannelClient::evaluate(const Invocation& inv, EvaluateHandler handler) {
  EvaluateOutcome out;
  try {
    out.payload = event_peer_.query(channel_, inv.chaincode, inv.function, inv.args);
    out.ok = true;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  executor_.post([out = std::move(out), handler = std::move(handler)] { handler(out); });
}

}  // namespace fleetledger
