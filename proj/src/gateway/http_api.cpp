#include "fleetledger/http_api.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <charconv>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <future>
#include <regex>

#include "fleetledger/contracts.hpp"
#include "fleetledger/error.hpp"
#include "fleetledger/peer.hpp"

namespace fleetledger::gateway {

using nlohmann::json;

namespace {

constexpr auto kSubmitTimeout = std::chrono::seconds(15);

BlockSummary summarize(const std::string& channel, const Block& b) {
  BlockSummary s;
  s.channel = channel;
  s.number = b.header.number;
  s.commit_time = b.cut_time.count();
  for (std::size_t i = 0; i < b.transactions.size(); ++i) {
    const auto& tx = b.transactions[i];
    s.txs.push_back({to_hex(tx.tx_id), tx.chaincode, tx.function,
                     i < b.validation_codes.size() ? std::string(to_string(b.validation_codes[i])) : "PENDING"});
  }
  return s;
}

HttpApi::Reply error_reply(int status, const std::string& message) {
  return {status, json{{"error", message}}.dump()};
}

HttpApi::Reply json_reply(int status, const json& body) { return {status, body.dump()}; }

std::optional<std::uint64_t> parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::string param(const std::map<std::string, std::string>& params, const std::string& key,
                  const std::string& fallback = "") {
  auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

}  // namespace

json BlockSummary::to_json() const {
  json txs_json = json::array();
  for (const auto& t : txs) {
    txs_json.push_back({{"tx_id", t.tx_id}, {"chaincode", t.chaincode}, {"function", t.function}, {"code", t.code}});
  }
  return {{"channel", channel}, {"block", number}, {"cut_time", std::to_string(commit_time)}, {"txs", txs_json}};
}

NetworkBackend::NetworkBackend(Network& network, Identity submitter, sim::TopicBus* bus)
    : network_(network), submitter_(std::move(submitter)), bus_(bus) {}

NetworkBackend::~NetworkBackend() {
  try {
    network_.executor().run_sync([this] {
      for (auto& [id, sub] : block_subs_) sub.first->remove_listener(sub.second);
      if (bus_) {
        for (auto& [id, sub] : pose_subs_) bus_->unsubscribe(sub);
      }
      block_subs_.clear();
      pose_subs_.clear();
      clients_.clear();
    });
  } catch (const std::exception&) {
    // The executor is gone, and with it everything registered on it.
  }
}

template <class F>
auto NetworkBackend::on_executor(F&& fn) -> decltype(fn()) {
  if (down_) throw Error(ErrorCode::network_down, "ledger network unavailable");
  try {
    return network_.executor().run_sync(std::forward<F>(fn));
  } catch (const std::future_error&) {
    throw Error(ErrorCode::network_down, "ledger executor stopped");
  }
}

Peer& NetworkBackend::view_peer(const std::string& channel) {
  return *network_.route(channel, submitter_.org_id()).event_peer;
}

std::vector<std::string> NetworkBackend::channels() {
  return on_executor([this] { return network_.channel_names(); });
}

bool NetworkBackend::has_channel(const std::string& channel) {
  return on_executor([this, &channel] { return network_.has_channel(channel); });
}

EvaluateOutcome NetworkBackend::query(const std::string& channel, const Invocation& inv) {
  return on_executor([&] {
    EvaluateOutcome out;
    try {
      out.payload = view_peer(channel).query(channel, inv.chaincode, inv.function, inv.args);
      out.ok = true;
    } catch (const std::exception& e) {
      out.error = e.what();
    }
    return out;
  });
}

SubmitOutcome NetworkBackend::submit(const std::string& channel, const Invocation& inv) {
  auto promise = std::make_shared<std::promise<SubmitOutcome>>();
  auto fut = promise->get_future();
  on_executor([&] {
    auto& client = clients_[channel];
    if (!client) client = network_.client(submitter_, channel);
    client->submit(inv, {}, [promise](const SubmitOutcome& o) { promise->set_value(o); });
    return 0;
  });
  if (fut.wait_for(kSubmitTimeout) != std::future_status::ready) {
    throw Error(ErrorCode::network_down, "no answer from the orderer");
  }
  return fut.get();
}

ApiBackend::SubscriptionId NetworkBackend::subscribe_blocks(const std::string& channel, std::uint64_t from_block,
                                                            BlockSink sink) {
  return on_executor([&] {
    auto& peer = view_peer(channel);
    const auto& blocks = peer.ledger(channel).blocks();
    for (auto i = from_block; i < blocks.size(); ++i) sink(summarize(channel, blocks[i]));
    const auto lid = peer.on_block(channel, [channel, sink](const Block& b) { sink(summarize(channel, b)); });
    const auto id = next_sub_++;
    block_subs_[id] = {&peer, lid};
    return id;
  });
}

ApiBackend::SubscriptionId NetworkBackend::subscribe_poses(PoseSink sink) {
  if (!bus_) return 0;
  return on_executor([&] {
    const auto sub = bus_->subscribe_all([sink](const sim::Message& m) {
      if (std::holds_alternative<sim::PoseMsg>(m.payload)) sink(m);
    });
    const auto id = next_sub_++;
    pose_subs_[id] = sub;
    return id;
  });
}

void NetworkBackend::unsubscribe(SubscriptionId id) {
  try {
    network_.executor().run_sync([&] {
      if (auto it = block_subs_.find(id); it != block_subs_.end()) {
        it->second.first->remove_listener(it->second.second);
        block_subs_.erase(it);
      }
      if (auto it = pose_subs_.find(id); it != pose_subs_.end()) {
        if (bus_) bus_->unsubscribe(it->second);
        pose_subs_.erase(it);
      }
    });
  } catch (const std::future_error&) {
  }
}

std::uint64_t NetworkBackend::height(const std::string& channel) {
  return on_executor([&] { return view_peer(channel).ledger(channel).height(); });
}

std::int64_t NetworkBackend::now_ns() { return network_.executor().now().count(); }

/// Queue between backend callbacks and one SSE connection.
struct SseStream {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::string> events;
  bool closed = false;

  void push(std::string e) {
    std::lock_guard lock(mu);
    events.push_back(std::move(e));
    cv.notify_one();
  }
  void close() {
    std::lock_guard lock(mu);
    closed = true;
    cv.notify_one();
  }
};

namespace {

std::string pose_event(const sim::Message& m) {
  const auto& p = std::get<sim::PoseMsg>(m.payload);
  json data = {{"robot_id", p.robot_id}, {"stamp", std::to_string(m.stamp)}, {"x", p.pose.x},
               {"y", p.pose.y},          {"z", p.pose.z},                    {"yaw", p.pose.yaw}};
  return "event: pose\ndata: " + data.dump() + "\n\n";
}

std::string block_event(const BlockSummary& b) {
  return "id: " + std::to_string(b.number) + "\nevent: block\ndata: " + b.to_json().dump() + "\n\n";
}

}  // namespace

struct SseHub {
  std::mutex mu;
  std::vector<std::weak_ptr<SseStream>> streams;
  void close_all() {
    std::lock_guard lock(mu);
    for (auto& w : streams) {
      if (auto s = w.lock()) s->close();
    }
    streams.clear();
  }
};

HttpApi::HttpApi(ApiBackend& backend, HttpOptions options)
    : backend_(backend), options_(std::move(options)), hub_(std::make_shared<SseHub>()) {}

HttpApi::~HttpApi() { stop(); }

void HttpApi::start() {
  if (server_) return;
  server_ = std::make_unique<httplib::Server>();
  install_routes();
  if (options_.port == 0) {
    const int p = server_->bind_to_any_port(options_.host);
    if (p <= 0) throw Error(ErrorCode::network_down, "cannot bind HTTP facade on " + options_.host);
    port_ = static_cast<std::uint16_t>(p);
  } else {
    if (!server_->bind_to_port(options_.host, options_.port)) {
      throw Error(ErrorCode::network_down,
                  "cannot bind HTTP facade on " + options_.host + ":" + std::to_string(options_.port));
    }
    port_ = options_.port;
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  spdlog::info("http facade on http://{}:{}/api", options_.host, port_);
}

void HttpApi::stop() {
  if (!server_) return;
  hub_->close_all();
  server_->stop();
  if (thread_.joinable()) thread_.join();
  server_.reset();
}

void HttpApi::install_routes() {
  auto& svr = *server_;
  svr.set_default_headers({{"Access-Control-Allow-Origin", options_.cors_origin},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                           {"Access-Control-Allow-Headers", "Content-Type, Last-Event-ID"}});
  svr.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  auto params_of = [](const httplib::Request& req) {
    std::map<std::string, std::string> out;
    for (const auto& [k, v] : req.params) out.emplace(k, v);
    return out;
  };
  auto send = [](httplib::Response& res, const Reply& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };

  svr.Get("/api/events", [this](const httplib::Request& req, httplib::Response& res) {
    const auto channel = req.has_param("channel") ? req.get_param_value("channel") : options_.default_channel;
    std::uint64_t from = 0;
    try {
      if (!backend_.has_channel(channel)) {
        res.status = 404;
        res.set_content(json{{"error", "unknown channel " + channel}}.dump(), "application/json");
        return;
      }
      std::string last = req.get_header_value("Last-Event-ID");
      if (last.empty() && req.has_param("lastEventId")) last = req.get_param_value("lastEventId");
      if (auto n = parse_u64(last)) {
        from = *n + 1;
      } else {
        from = backend_.height(channel);
      }
    } catch (const Error& e) {
      res.status = 503;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
      return;
    }
    const bool poses = req.get_param_value("poses") != "0";
    auto stream = std::make_shared<SseStream>();
    auto hub = hub_;
    {
      std::lock_guard lock(hub->mu);
      hub->streams.push_back(stream);
    }
    std::vector<ApiBackend::SubscriptionId> subs;
    try {
      subs.push_back(backend_.subscribe_blocks(channel, from,
                                               [stream](const BlockSummary& b) { stream->push(block_event(b)); }));
      if (poses) {
        if (auto id = backend_.subscribe_poses([stream](const sim::Message& m) { stream->push(pose_event(m)); })) {
          subs.push_back(id);
        }
      }
    } catch (const Error& e) {
      for (auto id : subs) backend_.unsubscribe(id);
      res.status = 503;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
      return;
    }
    res.set_header("Cache-Control", "no-cache");
    const auto keepalive = options_.keepalive;
    res.set_chunked_content_provider(
        "text/event-stream",
        [stream, keepalive](std::size_t, httplib::DataSink& sink) {
          std::deque<std::string> batch;
          {
            std::unique_lock lock(stream->mu);
            stream->cv.wait_for(lock, keepalive, [&] { return stream->closed || !stream->events.empty(); });
            if (stream->closed) return false;
            batch.swap(stream->events);
          }
          if (batch.empty()) batch.push_back(": keepalive\n\n");
          for (const auto& e : batch) {
            if (!sink.write(e.data(), e.size())) return false;
          }
          return true;
        },
        [this, subs, stream](bool) {
          stream->close();
          for (auto id : subs) backend_.unsubscribe(id);
        });
  });

  svr.Post("/api/commands", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, post_command(req.body));
  });

  svr.Get(R"(/api/.*)", [this, params_of, send](const httplib::Request& req, httplib::Response& res) {
    send(res, get(req.path, params_of(req)));
  });

  if (options_.ui_dir && std::filesystem::is_directory(*options_.ui_dir)) {
    svr.set_mount_point("/", options_.ui_dir->string());
  }
}

HttpApi::Reply HttpApi::get(const std::string& path, const std::map<std::string, std::string>& params) {
  static const std::regex assets_re(R"(^/api/channels/([^/]+)/assets/?$)");
  static const std::regex trajectory_re(R"(^/api/robots/([^/]+)/trajectory/?$)");
  std::smatch m;
  try {
    if (path == "/api/channels" || path == "/api/channels/") return channels();
    if (std::regex_match(path, m, assets_re)) return assets(m[1], params);
    if (std::regex_match(path, m, trajectory_re)) return trajectory(m[1], params);
    if (path == "/api/objects") return objects(params);
    if (path == "/api/world") return world();
    return error_reply(404, "no route for " + path);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::network_down) return error_reply(503, e.what());
    return error_reply(500, e.what());
  }
}

HttpApi::Reply HttpApi::channels() { return json_reply(200, backend_.channels()); }

HttpApi::Reply HttpApi::assets(const std::string& channel, const std::map<std::string, std::string>& params) {
  if (!backend_.has_channel(channel)) return error_reply(404, "unknown channel " + channel);
  std::vector<std::string> contracts_to_read;
  const auto contract = param(params, "contract");
  if (contract.empty()) {
    contracts_to_read = {std::string(contracts::kPathChaincode), std::string(contracts::kObjectChaincode),
                         std::string(contracts::kCommandChaincode)};
  } else if (contract == contracts::kPathChaincode || contract == contracts::kObjectChaincode ||
             contract == contracts::kCommandChaincode) {
    contracts_to_read = {contract};
  } else {
    return error_reply(400, "contract must be path, object or command");
  }
  std::optional<std::uint64_t> limit;
  if (params.count("limit")) {
    limit = parse_u64(param(params, "limit"));
    if (!limit) return error_reply(400, "limit must be a non-negative integer");
  }
  json out = json::array();
  for (const auto& cc : contracts_to_read) {
    auto r = backend_.query(channel, {cc, "ReadAllAssets", {}});
    if (!r.ok) {
      // A channel without this contract simply has no such assets.
      if (r.error.find("unknown-chaincode") != std::string::npos || r.error.find("unknown_chaincode") != std::string::npos) {
        continue;
      }
      return error_reply(500, r.error);
    }
    for (auto& a : json::parse(to_string(r.payload))) {
      if (limit && out.size() >= *limit) break;
      out.push_back(std::move(a));
    }
  }
  return json_reply(200, out);
}

bool HttpApi::known_robot(const std::string& channel, const std::string& robot) {
  if (std::find(options_.robots.begin(), options_.robots.end(), robot) != options_.robots.end()) return true;
  auto r = backend_.query(channel, {std::string(contracts::kPathChaincode), "ReadTrajectory", {robot}});
  return r.ok && !json::parse(to_string(r.payload)).empty();
}

HttpApi::Reply HttpApi::trajectory(const std::string& robot, const std::map<std::string, std::string>& params) {
  const auto channel = param(params, "channel", options_.default_channel);
  if (!backend_.has_channel(channel)) return error_reply(404, "unknown channel " + channel);
  auto r = backend_.query(channel, {std::string(contracts::kPathChaincode), "ReadTrajectory", {robot}});
  if (!r.ok) return error_reply(500, r.error);
  auto points = json::parse(to_string(r.payload));
  if (points.empty() && !known_robot(channel, robot)) return error_reply(404, "unknown robot " + robot);
  json out = json::array();
  for (const auto& p : points) out.push_back({{"stamp", p.at("stamp")}, {"x", p.at("x")}, {"y", p.at("y")}, {"z", p.at("z")}});
  return json_reply(200, out);
}

HttpApi::Reply HttpApi::objects(const std::map<std::string, std::string>& params) {
  const auto channel = param(params, "channel", options_.default_channel);
  if (!backend_.has_channel(channel)) return error_reply(404, "unknown channel " + channel);
  auto r = backend_.query(channel, {std::string(contracts::kObjectChaincode), "ReadAllAssets", {}});
  if (!r.ok) return error_reply(500, r.error);
  json out = json::array();
  for (const auto& o : json::parse(to_string(r.payload))) {
    out.push_back({{"asset_id", o.at("asset_id")},
                   {"label", o.at("label")},
                   {"robot_id", o.at("robot_id")},
                   {"x", o.at("x")},
                   {"y", o.at("y")},
                   {"z", o.at("z")},
                   {"confidence", o.at("confidence")},
                   {"stamp", o.at("stamp")}});
  }
  return json_reply(200, out);
}

HttpApi::Reply HttpApi::world() {
  if (!options_.world) return error_reply(404, "no world model configured");
  return json_reply(200, *options_.world);
}

std::uint64_t HttpApi::next_command_seq(const std::string& channel) {
  std::uint64_t max_seq = 0;
  auto r = backend_.query(channel, {std::string(contracts::kCommandChaincode), "ReadAllAssets", {}});
  if (r.ok) {
    for (const auto& c : json::parse(to_string(r.payload))) {
      const auto id = c.at("asset_id").get<std::string>();
      if (auto seq = parse_u64(id.substr(id.rfind('~') + 1))) max_seq = std::max(max_seq, *seq);
    }
  }
  std::lock_guard lock(seq_mu_);
  reserved_seq_ = std::max(reserved_seq_, max_seq) + 1;
  return reserved_seq_;
}

HttpApi::Reply HttpApi::post_command(const std::string& body) {
  json req;
  try {
    req = json::parse(body);
  } catch (const json::exception&) {
    return error_reply(400, "body must be JSON");
  }
  if (!req.is_object() || !req.contains("robot_id") || !req["robot_id"].is_string() ||
      req["robot_id"].get<std::string>().empty()) {
    return error_reply(400, "robot_id must be a non-empty string");
  }
  if (!req.contains("waypoints") || !req["waypoints"].is_array() || req["waypoints"].empty()) {
    return error_reply(400, "waypoints must be a non-empty array of [x, y, z]");
  }
  std::vector<contracts::Waypoint> waypoints;
  for (const auto& w : req["waypoints"]) {
    if (!w.is_array() || w.size() != 3) return error_reply(400, "each waypoint must be [x, y, z]");
    contracts::Waypoint p{};
    for (std::size_t i = 0; i < 3; ++i) {
      if (!w[i].is_number() || !std::isfinite(w[i].get<double>())) {
        return error_reply(400, "waypoint coordinates must be finite numbers");
      }
      p[i] = w[i].get<double>();
    }
    waypoints.push_back(p);
  }
  const auto robot = req["robot_id"].get<std::string>();
  const auto channel = req.value("channel", options_.default_channel);
  try {
    if (!backend_.has_channel(channel)) return error_reply(404, "unknown channel " + channel);
    if (!known_robot(channel, robot)) return error_reply(404, "unknown robot " + robot);
    for (int attempt = 0; attempt < 3; ++attempt) {
      const auto seq = next_command_seq(channel);
      auto out = backend_.submit(channel, {std::string(contracts::kCommandChaincode),
                                           "CreateCommand",
                                           {std::to_string(seq), robot, contracts::format_waypoints(waypoints),
                                            std::to_string(backend_.now_ns()), backend_.submitter_org()}});
      if (out.ordered) {
        return json_reply(202, {{"asset_id", contracts::command_asset_id(seq)}, {"tx_id", to_hex(out.tx_id)}});
      }
      if (out.error.find("already exists") != std::string::npos) continue;
      if (out.error.find("stopped") != std::string::npos) return error_reply(503, out.error);
      return error_reply(400, out.error);
    }
    return error_reply(503, "could not reserve a command sequence number");
  } catch (const Error& e) {
    if (e.code() == ErrorCode::network_down) return error_reply(503, e.what());
    return error_reply(500, e.what());
  }
}

}  // namespace fleetledger::gateway
