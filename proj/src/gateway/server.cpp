#include <spdlog/spdlog.h>

#include "fleetledger/codec.hpp"
#include "fleetledger/contracts.hpp"
#include "fleetledger/gateway.hpp"
#include "fleetledger/peer.hpp"

namespace fleetledger::gateway {

struct GatewayServer::Session {
  Socket socket;
  std::thread reader;
  std::thread writer;
  std::atomic<bool> finished{false};

  std::mutex mu;
  std::condition_variable cv;
  std::deque<Frame> outbox;
  bool closing = false;
  bool close_after_flush = false;

  // Executor-confined from here on.
  bool greeted = false;
  Certificate cert;
  std::string channel;
  Network::Route route;
  std::vector<std::pair<Peer*, Peer::ListenerId>> peer_listeners;
  std::vector<Orderer::SubscriptionId> deliveries;
  std::vector<sim::TopicBus::SubscriptionId> topics;
  bool released = false;

  void push(Frame f) {
    std::lock_guard lock(mu);
    if (closing) return;
    outbox.push_back(std::move(f));
    cv.notify_one();
  }
  void reply(std::uint64_t id, const Response& r) { push({Kind::response, id, r.serialize()}); }
  /// Sends what is queued, then closes the connection.
  void finish(std::uint64_t id, const Response& r) {
    std::lock_guard lock(mu);
    if (closing) return;
    outbox.push_back({Kind::response, id, r.serialize()});
    close_after_flush = true;
    cv.notify_one();
  }
  void close() {
    std::lock_guard lock(mu);
    closing = true;
    cv.notify_one();
  }

  void write_loop() {
    for (;;) {
      Frame f;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return closing || !outbox.empty(); });
        if (outbox.empty() || closing) break;
        f = std::move(outbox.front());
        outbox.pop_front();
      }
      try {
        socket.send(f);
      } catch (const Error&) {
        break;
      }
      std::lock_guard lock(mu);
      if (close_after_flush && outbox.empty()) break;
    }
    socket.shutdown();
  }
};

GatewayServer::GatewayServer(Network& network, ServerOptions options)
    : network_(network), options_(std::move(options)) {
  if (options_.contracts.empty()) options_.contracts = contracts::standard_contracts();
}

GatewayServer::~GatewayServer() {
  stop();
  *alive_ = false;
}

void GatewayServer::start() {
  if (running_.exchange(true)) return;
  listener_ = std::make_unique<Listener>(options_.host, options_.port);
  accept_thread_ = std::thread([this] { accept_loop(); });
  spdlog::info("gateway listening on {}:{}", options_.host, listener_->port());
}

std::uint16_t GatewayServer::port() const { return listener_ ? listener_->port() : 0; }

std::size_t GatewayServer::session_count() const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (const auto& s : sessions_) n += !s->finished.load();
  return n;
}

void GatewayServer::stop() {
  if (!running_.exchange(false)) return;
  listener_->close();
  if (accept_thread_.joinable()) accept_thread_.join();
  std::set<std::shared_ptr<Session>> sessions;
  {
    std::lock_guard lock(mu_);
    sessions.swap(sessions_);
  }
  for (const auto& s : sessions) {
    s->close();
    s->socket.shutdown();
    if (s->reader.joinable()) s->reader.join();
  }
  try {
    network_.executor().run_sync([&] {
      for (const auto& s : sessions) release(*s);
    });
  } catch (const std::exception&) {
    // Executor already stopped; nothing left to unhook from.
  }
}

void GatewayServer::reap() {
  std::lock_guard lock(mu_);
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    if ((*it)->finished) {
      if ((*it)->reader.joinable()) (*it)->reader.join();
      it = sessions_.erase(it);
    } else {
      ++it;
    }
  }
}

void GatewayServer::accept_loop() {
  while (running_) {
    auto sock = listener_->accept();
    if (!sock) break;
    reap();
    auto session = std::make_shared<Session>();
    session->socket = std::move(*sock);
    {
      std::lock_guard lock(mu_);
      sessions_.insert(session);
    }
    session->writer = std::thread([session] { session->write_loop(); });
    session->reader = std::thread([this, session] { reader(session); });
  }
}

void GatewayServer::reader(const std::shared_ptr<Session>& session) {
  auto& ex = network_.executor();
  for (;;) {
    std::optional<Frame> frame;
    try {
      frame = session->socket.receive(options_.max_frame);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::protocol_error) {
        spdlog::warn("gateway: closing session: {}", e.what());
        session->finish(0, Response::failure(ErrorCode::protocol_error, e.what()));
      }
      break;
    }
    if (!frame) break;
    ex.post([this, alive = alive_, session, f = std::move(*frame)]() mutable {
      if (*alive) handle(session, std::move(f));
    });
  }
  {
    std::lock_guard lock(session->mu);
    // Let a pending refusal or protocol error drain before closing.
    if (!session->close_after_flush) session->closing = true;
    session->cv.notify_one();
  }
  if (session->writer.joinable()) session->writer.join();
  ex.post([this, alive = alive_, session] {
    if (*alive) release(*session);
  });
  session->finished = true;
}

void GatewayServer::release(Session& s) {
  if (s.released) return;
  s.released = true;
  for (auto [peer, id] : s.peer_listeners) peer->remove_listener(id);
  for (auto id : s.deliveries) network_.orderer().cancel_delivery(id);
  if (bus_) {
    for (auto id : s.topics) bus_->unsubscribe(id);
  }
  s.peer_listeners.clear();
  s.deliveries.clear();
  s.topics.clear();
}

Response GatewayServer::handle_hello(Session& s, const Frame& f) {
  try {
    Decoder d(f.body);
    auto cert = Certificate::deserialize(d.bytes());
    auto nonce = d.bytes();
    auto sig = d.bytes();
    d.expect_done();
    if (nonce.size() != 16 || !verify_identity(cert, network_.trusted_roots()) ||
        !verify_signature(cert, hello_payload(nonce), sig)) {
      return Response::failure(ErrorCode::not_a_member, "identity not verified by any network CA");
    }
    s.cert = std::move(cert);
    s.greeted = true;
    Response r;
    r.payload = to_bytes(s.cert.org_id);
    return r;
  } catch (const Error& e) {
    return Response::failure(ErrorCode::not_a_member, std::string("malformed hello: ") + e.what());
  }
}

Response GatewayServer::handle_channel(Session& s, const Frame& f) {
  Decoder d(f.body);
  const auto name = d.str();
  d.expect_done();
  if (!network_.has_channel(name)) return Response::failure(ErrorCode::unknown_channel, "no channel " + name);
  if (!network_.channel(name).is_member(s.cert.org_id)) {
    return Response::failure(ErrorCode::not_a_member, s.cert.org_id + " is not a member of " + name);
  }
  s.route = network_.route(name, s.cert.org_id);
  s.channel = name;
  return {};
}

Response GatewayServer::handle_endorse(Session& s, const Frame& f) {
  Decoder d(f.body);
  const auto proposal = Proposal::decode(d);
  d.expect_done();
  if (proposal.creator != s.cert || proposal.channel != s.channel) {
    return Response::failure(ErrorCode::not_a_member, "proposal does not match the session identity and channel");
  }
  Encoder e;
  e.u64(s.route.required);
  e.count(s.route.endorsers.size());
  for (auto* peer : s.route.endorsers) peer->endorse(proposal).encode(e);
  Response r;
  r.payload = std::move(e).take();
  return r;
}

Response GatewayServer::handle_admin(Session& s, const Frame& f) {
  if (s.cert.role != Role::admin) {
    return Response::failure(ErrorCode::not_a_member, s.cert.subject_id + " is not an admin of " + s.cert.org_id);
  }
  const auto& org = s.cert.org_id;
  Decoder d(f.body);
  if (f.kind == Kind::admin_create_channel) {
    const auto name = d.str();
    const auto orgs = d.str_list();
    const auto config = OrdererConfig::decode(d);
    d.expect_done();
    if (std::find(orgs.begin(), orgs.end(), org) == orgs.end()) {
      return Response::failure(ErrorCode::not_a_member, org + " must be a member of the channel it creates");
    }
    config.validate();
    network_.create_channel(name, orgs, config);
    for (const auto& o : network_.spec().orgs) {
      if (std::find(orgs.begin(), orgs.end(), o.id) == orgs.end()) continue;
      for (const auto& peer_id : o.peers) network_.join_peer(name, peer_id);
      network_.set_anchor_peer(name, o.id, o.peers.front());
    }
    spdlog::info("gateway: {} created channel {}", s.cert.subject_id, name);
    return {};
  }
  const auto channel = d.str();
  const auto name = d.str();
  if (f.kind == Kind::admin_approve) {
    const auto version = d.str();
    d.expect_done();
    auto impl = std::find_if(options_.contracts.begin(), options_.contracts.end(),
                             [&](const auto& c) { return c->name() == name; });
    if (impl == options_.contracts.end()) {
      return Response::failure(ErrorCode::unknown_chaincode, "no package for chaincode " + name);
    }
    const auto& ch = network_.channel(channel);
    for (auto* p : network_.channel_peers(channel)) {
      if (p->org_id() == org) p->install(*impl);
    }
    ChaincodeDefinition def;
    def.name = name;
    def.version = version;
    const auto* current = ch.committed(name);
    def.sequence = current ? current->sequence + 1 : 1;
    network_.approve_chaincode(channel, org, def);
    spdlog::info("gateway: {} approved {} on {}", org, name, channel);
    return {};
  }
  d.expect_done();
  if (!network_.channel(channel).is_member(org)) {
    return Response::failure(ErrorCode::not_a_member, org + " is not a member of " + channel);
  }
  network_.commit_chaincode(channel, name);
  spdlog::info("gateway: {} committed {} on {}", s.cert.subject_id, name, channel);
  return {};
}

void GatewayServer::handle(const std::shared_ptr<Session>& session, Frame frame) {
  auto& s = *session;
  if (s.released) return;
  if (!s.greeted) {
    auto r = frame.kind == Kind::hello ? handle_hello(s, frame)
                                       : Response::failure(ErrorCode::not_a_member, "hello required first");
    if (r.ok) {
      s.reply(frame.id, r);
    } else {
      refused_.fetch_add(1);
      spdlog::info("gateway: refused connection: {}", r.error);
      s.finish(frame.id, r);
    }
    return;
  }
  const std::weak_ptr<Session> weak = session;
  const auto id = frame.id;
  Response r;
  try {
    const bool admin = frame.kind == Kind::admin_create_channel || frame.kind == Kind::admin_approve ||
                       frame.kind == Kind::admin_commit;
    const bool needs_channel =
        !admin && frame.kind != Kind::channel && frame.kind != Kind::topic_subscribe && frame.kind != Kind::hello;
    if (needs_channel && s.channel.empty()) {
      s.reply(id, Response::failure(ErrorCode::protocol_error, "no channel bound"));
      return;
    }
    switch (frame.kind) {
      case Kind::hello:
        r = Response::failure(ErrorCode::protocol_error, "already greeted");
        break;
      case Kind::channel:
        r = handle_channel(s, frame);
        break;
      case Kind::chaincode: {
        Decoder d(frame.body);
        const auto name = d.str();
        d.expect_done();
        if (!network_.channel(s.channel).is_committed(name)) {
          r = Response::failure(ErrorCode::unknown_chaincode, name + " is not committed on " + s.channel);
        }
        break;
      }
      case Kind::endorse:
        r = handle_endorse(s, frame);
        break;
      case Kind::admin_create_channel:
      case Kind::admin_approve:
      case Kind::admin_commit:
        r = handle_admin(s, frame);
        break;
      case Kind::submit: {
        auto tx = Transaction::deserialize(frame.body);
        if (tx.creator != s.cert) {
          r = Response::failure(ErrorCode::not_a_member, "transaction creator is not the session identity");
          break;
        }
        const auto status = network_.orderer().submit(std::move(tx));
        if (status == SubmitStatus::not_a_member) {
          r = Response::failure(ErrorCode::not_a_member, "orderer refused: not_a_member");
        } else if (status == SubmitStatus::unknown_channel) {
          r = Response::failure(ErrorCode::unknown_channel, "orderer refused: unknown channel");
        } else if (status == SubmitStatus::stopped) {
          r = Response::failure(ErrorCode::network_down, "orderer stopped");
        }
        break;
      }
      case Kind::query: {
        Decoder d(frame.body);
        const auto cc = d.str();
        const auto fn = d.str();
        const auto args = d.str_list();
        d.expect_done();
        try {
          r.payload = s.route.event_peer->query(s.channel, cc, fn, args);
        } catch (const Error& e) {
          r = Response::failure(e.code(), e.what());
        } catch (const std::exception& e) {
          r = Response::failure(ErrorCode::contract_error, e.what());
        }
        break;
      }
      case Kind::events_subscribe: {
        auto* peer = s.route.event_peer;
        const auto lid = peer->on_commit(s.channel, [weak, id](const CommitEvent& ev) {
          if (auto sp = weak.lock()) {
            Encoder e;
            ev.encode(e);
            sp->push({Kind::commit_event, id, std::move(e).take()});
          }
        });
        s.peer_listeners.emplace_back(peer, lid);
        break;
      }
      case Kind::deliver_from: {
        Decoder d(frame.body);
        const auto from = d.u64();
        d.expect_done();
        s.deliveries.push_back(network_.orderer().deliver(s.channel, from, [weak, id](const Block& b) {
          if (auto sp = weak.lock()) {
            Encoder e;
            b.encode(e);
            sp->push({Kind::block, id, std::move(e).take()});
          }
        }));
        break;
      }
      case Kind::topic_subscribe: {
        Decoder d(frame.body);
        const auto topic = d.str();
        d.expect_done();
        if (!bus_) {
          r = Response::failure(ErrorCode::invalid_argument, "this gateway has no simulator attached");
          break;
        }
        auto forward = [weak, id](const sim::Message& m) {
          if (auto sp = weak.lock()) sp->push({Kind::topic_message, id, sim::encode_message(m)});
        };
        s.topics.push_back(topic.empty() ? bus_->subscribe_all(forward) : bus_->subscribe(topic, forward));
        break;
      }
      default:
        r = Response::failure(ErrorCode::protocol_error, "unexpected frame kind " + std::string(to_string(frame.kind)));
    }
  } catch (const Error& e) {
    r = Response::failure(e.code() == ErrorCode::decode_error ? ErrorCode::protocol_error : e.code(), e.what());
  }
  s.reply(id, r);
}

}  // namespace fleetledger::gateway
