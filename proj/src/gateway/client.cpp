#include <spdlog/spdlog.h>

#include "fleetledger/codec.hpp"
#include "fleetledger/crypto.hpp"
#include "fleetledger/gateway.hpp"
#include "fleetledger/peer.hpp"

namespace fleetledger::gateway {

namespace {

std::optional<ValidationCode> validation_code_for(std::optional<ErrorCode> code) {
  if (code == ErrorCode::unknown_chaincode) return ValidationCode::unknown_chaincode;
  if (code == ErrorCode::not_a_member) return ValidationCode::not_a_member;
  return std::nullopt;
}

void raise(const Response& r) {
  if (r.ok) return;
  const auto code = r.code.value_or(ErrorCode::protocol_error);
  const auto prefix = std::string(to_string(code)) + ": ";
  const bool prefixed = r.error.compare(0, prefix.size(), prefix) == 0;
  throw Error(code, prefixed ? r.error.substr(prefix.size()) : r.error);
}

}  // namespace

GatewayClient::GatewayClient(Socket socket, Identity identity, Executor& executor, Options options)
    : socket_(std::move(socket)),
      identity_(std::move(identity)),
      executor_(executor),
      options_(options),
      nonces_(crypto::random_bytes(16)) {
  reader_ = std::thread([this] { read_loop(); });
}

std::unique_ptr<GatewayClient> GatewayClient::connect(const std::string& host, std::uint16_t port,
                                                      Identity identity, Executor& executor, Options options) {
  auto sock = Socket::connect(host, port);
  std::unique_ptr<GatewayClient> client(new GatewayClient(std::move(sock), std::move(identity), executor, options));
  const auto nonce = crypto::random_bytes(16);
  Encoder e;
  e.bytes(client->identity_.certificate().serialize()).bytes(nonce).bytes(client->identity_.sign(hello_payload(nonce)));
  raise(client->request(Kind::hello, std::move(e).take()));
  return client;
}

GatewayClient::~GatewayClient() {
  *alive_ = false;
  close();
}

void GatewayClient::close() {
  socket_.shutdown();
  if (reader_.joinable() && reader_.get_id() != std::this_thread::get_id()) reader_.join();
}

std::uint64_t GatewayClient::send(Kind kind, Bytes body, Callback on_response, StreamHandler stream) {
  std::uint64_t id;
  {
    std::lock_guard lock(mu_);
    if (!connected_) {
      on_response(Response::failure(ErrorCode::network_down, "gateway connection closed"));
      return 0;
    }
    id = next_id_++;
    waiting_.emplace(id, std::move(on_response));
    if (stream) streams_.emplace(id, std::move(stream));
  }
  try {
    socket_.send({kind, id, std::move(body)});
  } catch (const Error& e) {
    Callback cb;
    {
      std::lock_guard lock(mu_);
      auto it = waiting_.find(id);
      if (it != waiting_.end()) {
        cb = std::move(it->second);
        waiting_.erase(it);
      }
    }
    if (cb) cb(Response::failure(ErrorCode::network_down, e.what()));
  }
  return id;
}

Response GatewayClient::request(Kind kind, Bytes body, StreamHandler stream) {
  auto promise = std::make_shared<std::promise<Response>>();
  auto fut = promise->get_future();
  const auto id = send(kind, std::move(body), [promise](Response r) { promise->set_value(std::move(r)); }, std::move(stream));
  if (fut.wait_for(options_.request_timeout) != std::future_status::ready) {
    return Response::failure(ErrorCode::network_down, "gateway request timed out");
  }
  auto r = fut.get();
  if (!r.ok && id) {
    std::lock_guard lock(mu_);
    streams_.erase(id);
  }
  return r;
}

void GatewayClient::read_loop() {
  std::string why = "gateway connection closed";
  for (;;) {
    std::optional<Frame> frame;
    try {
      frame = socket_.receive(options_.max_frame);
    } catch (const Error& e) {
      why = e.what();
      break;
    }
    if (!frame) break;
    if (frame->kind != Kind::response) {
      on_stream(*frame);
      continue;
    }
    Response r;
    try {
      r = Response::deserialize(frame->body);
    } catch (const Error& e) {
      r = Response::failure(ErrorCode::protocol_error, e.what());
    }
    Callback cb;
    {
      std::lock_guard lock(mu_);
      auto it = waiting_.find(frame->id);
      if (it != waiting_.end()) {
        cb = std::move(it->second);
        waiting_.erase(it);
      } else if (frame->id == 0 && !r.ok) {
        why = r.error;
      }
    }
    if (cb) cb(std::move(r));
  }
  fail_all(why);
}

void GatewayClient::fail_all(const std::string& why) {
  std::map<std::uint64_t, Callback> waiting;
  {
    std::lock_guard lock(mu_);
    connected_ = false;
    waiting.swap(waiting_);
    streams_.clear();
  }
  for (auto& [id, cb] : waiting) cb(Response::failure(ErrorCode::network_down, why));
  executor_.post([this, alive = alive_, why] {
    if (!*alive) return;
    auto pending = std::move(pending_);
    pending_.clear();
    for (auto& [tx_id, p] : pending) {
      SubmitOutcome out;
      out.tx_id = tx_id;
      out.ordered = true;
      out.error = why;
      out.submit_time = p.submit_time;
      if (p.handler) p.handler(out);
    }
  });
}

void GatewayClient::on_stream(const Frame& frame) {
  if (frame.kind == Kind::commit_event) {
    try {
      Decoder d(frame.body);
      auto ev = CommitEvent::decode(d);
      executor_.post([this, alive = alive_, ev] {
        if (*alive) on_event(ev);
      });
    } catch (const Error& e) {
      spdlog::warn("gateway client: bad commit event: {}", e.what());
    }
    return;
  }
  std::function<void(const Frame&)> handler;
  {
    std::lock_guard lock(mu_);
    auto it = streams_.find(frame.id);
    if (it != streams_.end()) handler = it->second;
  }
  if (handler) handler(frame);
}

void GatewayClient::connect_to_channel(const std::string& channel) {
  Encoder e;
  e.str(channel);
  raise(request(Kind::channel, std::move(e).take()));
  channel_ = channel;
  raise(request(Kind::events_subscribe, {}));
}

ChaincodeHandle GatewayClient::load_chaincode(const std::string& name) {
  Encoder e;
  e.str(name);
  raise(request(Kind::chaincode, std::move(e).take()));
  return ChaincodeHandle(*this, name);
}

void GatewayClient::submit(const Invocation& inv, SubmitHandler on_committed, AcceptHandler on_accepted,
                           std::optional<Timestamp> submit_time) {
  SubmitOutcome base;
  base.submit_time = submit_time.value_or(executor_.now());
  auto deliver_failure = [this, alive = alive_, on_committed, on_accepted](SubmitOutcome out) {
    executor_.post([alive, out, on_committed, on_accepted] {
      if (!*alive) return;
      if (on_accepted) on_accepted(out);
      if (on_committed) on_committed(out);
    });
  };

  auto proposal = std::make_shared<Proposal>(
      make_proposal(identity_, channel_, inv.chaincode, inv.function, inv.args, nonces_.next()));
  Encoder e;
  proposal->encode(e);
  send(Kind::endorse, std::move(e).take(),
       [this, alive = alive_, proposal, base, on_committed, on_accepted, deliver_failure](Response r) {
         if (!r.ok) {
           auto out = base;
           out.error = r.error;
           out.code = validation_code_for(r.code);
           deliver_failure(out);
           return;
         }
         executor_.post([this, alive, proposal, base, r = std::move(r), on_committed, on_accepted,
                         deliver_failure]() mutable {
           if (!*alive) return;
           auto out = base;
           Transaction tx;
           try {
             Decoder d(r.payload);
             const auto required = d.u64();
             auto responses = d.list([](Decoder& dd) { return ProposalResponse::decode(dd); });
             d.expect_done();
             for (const auto& pr : responses) {
               if (!pr.ok) throw Error(ErrorCode::contract_error, pr.error);
             }
             if (responses.size() < required) {
               throw Error(ErrorCode::insufficient_endorsements,
                           std::to_string(responses.size()) + " of " + std::to_string(required) + " endorsements");
             }
             tx = assemble_transaction(*proposal, responses, identity_, base.submit_time);
           } catch (const Error& err) {
             out.error = err.what();
             out.code = validation_code_for(err.code());
             deliver_failure(out);
             return;
           }
           out.tx_id = tx.tx_id;
           out.payload = tx.response_payload;
           pending_[tx.tx_id] = Pending{on_committed, base.submit_time, tx.response_payload};
           const auto tx_id = tx.tx_id;
           send(Kind::submit, tx.serialize(), [this, alive, out, tx_id, on_accepted](Response sr) {
             executor_.post([this, alive, out = SubmitOutcome(out), tx_id, on_accepted, sr = std::move(sr)]() mutable {
               if (!*alive) return;
               if (sr.ok) {
                 out.ordered = true;
                 if (on_accepted) on_accepted(out);
                 return;
               }
               out.error = sr.error;
               out.code = validation_code_for(sr.code);
               SubmitHandler handler;
               if (auto it = pending_.find(tx_id); it != pending_.end()) {
                 handler = std::move(it->second.handler);
                 pending_.erase(it);
               }
               if (on_accepted) on_accepted(out);
               if (handler) handler(out);
             });
           });
         });
       });
}

void GatewayClient::on_event(const CommitEvent& ev) {
  auto it = pending_.find(ev.tx_id);
  if (it == pending_.end()) return;
  auto p = std::move(it->second);
  pending_.erase(it);
  SubmitOutcome out;
  out.tx_id = ev.tx_id;
  out.ordered = true;
  out.code = ev.code;
  out.payload = std::move(p.payload);
  out.submit_time = p.submit_time;
  out.commit_time = executor_.now();
  out.block_no = ev.block_no;
  if (p.handler) p.handler(out);
}

void GatewayClient::evaluate(const Invocation& inv, EvaluateHandler handler) {
  Encoder e;
  e.str(inv.chaincode).str(inv.function).str_list(inv.args);
  send(Kind::query, std::move(e).take(), [this, alive = alive_, handler](Response r) {
    EvaluateOutcome out;
    out.ok = r.ok;
    out.error = r.error;
    out.payload = std::move(r.payload);
    executor_.post([alive, handler, out = std::move(out)] {
      if (*alive) handler(out);
    });
  });
}

void GatewayClient::deliver_from(std::uint64_t from_block, std::function<void(const Block&)> sink) {
  Encoder e;
  e.u64(from_block);
  auto stream = [this, alive = alive_, sink](const Frame& f) {
    try {
      Decoder d(f.body);
      auto block = Block::decode(d);
      executor_.post([alive, sink, block = std::move(block)] {
        if (*alive) sink(block);
      });
    } catch (const Error& err) {
      spdlog::warn("gateway client: bad block frame: {}", err.what());
    }
  };
  raise(request(Kind::deliver_from, std::move(e).take(), std::move(stream)));
}

void GatewayClient::subscribe_topic(const std::string& topic, std::function<void(const sim::Message&)> handler) {
  Encoder e;
  e.str(topic);
  auto stream = [this, alive = alive_, handler](const Frame& f) {
    try {
      auto m = sim::decode_message(f.body);
      executor_.post([alive, handler, m = std::move(m)] {
        if (*alive) handler(m);
      });
    } catch (const Error& err) {
      spdlog::warn("gateway client: bad topic frame: {}", err.what());
    }
  };
  raise(request(Kind::topic_subscribe, std::move(e).take(), std::move(stream)));
}

void GatewayClient::create_channel(const std::string& name, const std::vector<std::string>& member_orgs,
                                   const OrdererConfig& config) {
  Encoder e;
  e.str(name).str_list(member_orgs);
  config.encode(e);
  raise(request(Kind::admin_create_channel, std::move(e).take()));
}

void GatewayClient::approve_chaincode(const std::string& channel, const std::string& name,
                                      const std::string& version) {
  Encoder e;
  e.str(channel).str(name).str(version);
  raise(request(Kind::admin_approve, std::move(e).take()));
}

void GatewayClient::commit_chaincode(const std::string& channel, const std::string& name) {
  Encoder e;
  e.str(channel).str(name);
  raise(request(Kind::admin_commit, std::move(e).take()));
}

SubmitOutcome ChaincodeHandle::submit(const std::string& function, std::vector<std::string> args) {
  auto promise = std::make_shared<std::promise<SubmitOutcome>>();
  auto fut = promise->get_future();
  Invocation inv{name_, function, std::move(args)};
  client_->executor().post([client = client_, inv, promise] {
    client->submit(inv, [promise](const SubmitOutcome& o) { promise->set_value(o); });
  });
  return fut.get();
}

EvaluateOutcome ChaincodeHandle::evaluate(const std::string& function, std::vector<std::string> args) {
  auto promise = std::make_shared<std::promise<EvaluateOutcome>>();
  auto fut = promise->get_future();
  Invocation inv{name_, function, std::move(args)};
  client_->executor().post([client = client_, inv, promise] {
    client->evaluate(inv, [promise](const EvaluateOutcome& o) { promise->set_value(o); });
  });
  return fut.get();
}

}  // namespace fleetledger::gateway
