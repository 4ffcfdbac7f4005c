#include "fleetledger/bench.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <limits>
#include <sstream>
#include <thread>

#include "fleetledger/codec.hpp"
#include "fleetledger/contracts.hpp"
#include "fleetledger/crypto.hpp"
#include "fleetledger/error.hpp"
#include "fleetledger/metrics.hpp"
#include "fleetledger/network.hpp"

namespace fleetledger::bench {

using nlohmann::json;

namespace {

constexpr const char* kChannel = "bench";

[[noreturn]] void bad_config(const std::string& what) {
  throw Error(ErrorCode::invalid_argument, "bench config: " + what);
}

std::string trim_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

std::string_view to_string(ClientMode m) { return m == ClientMode::synchronous ? "sync" : "open-loop"; }
std::string_view to_string(ClockMode m) { return m == ClockMode::realtime ? "realtime" : "logical"; }

ClientMode parse_client_mode(std::string_view s) {
  if (s == "sync" || s == "synchronous") return ClientMode::synchronous;
  if (s == "open-loop" || s == "open_loop" || s == "open") return ClientMode::open_loop;
  bad_config("mode must be sync or open-loop, got '" + std::string(s) + "'");
}

ClockMode parse_clock_mode(std::string_view s) {
  if (s == "realtime" || s == "real") return ClockMode::realtime;
  if (s == "logical") return ClockMode::logical;
  bad_config("clock must be realtime or logical, got '" + std::string(s) + "'");
}

void BenchConfig::validate() const {
  if (!(batch_timeout_s > 0) || !std::isfinite(batch_timeout_s)) bad_config("batch timeout must be positive");
  if (max_message_count < 1) bad_config("max messages must be at least 1");
  if (num_clients < 1) bad_config("at least one client is required");
  if (!(warmup_s >= 0) || !(duration_s > warmup_s) || !std::isfinite(duration_s)) {
    bad_config("duration must exceed warmup and warmup must be >= 0");
  }
  if (mode == ClientMode::open_loop && !(rate_hz > 0 && std::isfinite(rate_hz))) {
    bad_config("open-loop mode needs a positive rate");
  }
  if (!(think_time_s >= 0) || !std::isfinite(think_time_s)) bad_config("think time must be >= 0");
  if (clock == ClockMode::logical && mode == ClientMode::synchronous && think_time_s == 0 &&
      (num_clients >= max_message_count || max_batch_bytes > 0)) {
    bad_config("logical synchronous runs need a think time when clients can fill a block");
  }
}

std::string BenchConfig::display_label() const {
  if (!label.empty()) return label;
  return "BT" + trim_number(batch_timeout_s) + "_M" + std::to_string(max_message_count);
}

json BenchConfig::to_json() const {
  return {{"label", display_label()},
          {"batch_timeout_s", batch_timeout_s},
          {"max_message_count", max_message_count},
          {"max_batch_bytes", max_batch_bytes},
          {"mode", to_string(mode)},
          {"rate_hz", rate_hz},
          {"clients", num_clients},
          {"think_time_s", think_time_s},
          {"duration_s", duration_s},
          {"warmup_s", warmup_s},
          {"clock", to_string(clock)},
          {"seed", seed},
          {"submit_time", mode == ClientMode::open_loop ? "intended" : "actual"}};
}

BenchConfig BenchConfig::from_json(const json& j, const BenchConfig& defaults) {
  if (!j.is_object()) bad_config("run entries must be objects");
  BenchConfig c = defaults;
  try {
    c.label = j.value("label", defaults.label);
    c.batch_timeout_s = j.value("batch_timeout_s", defaults.batch_timeout_s);
    c.max_message_count = j.value("max_message_count", defaults.max_message_count);
    c.max_batch_bytes = j.value("max_batch_bytes", defaults.max_batch_bytes);
    if (j.contains("mode")) c.mode = parse_client_mode(j.at("mode").get<std::string>());
    c.rate_hz = j.value("rate_hz", defaults.rate_hz);
    c.num_clients = j.value("clients", defaults.num_clients);
    c.think_time_s = j.value("think_time_s", defaults.think_time_s);
    c.duration_s = j.value("duration_s", defaults.duration_s);
    c.warmup_s = j.value("warmup_s", defaults.warmup_s);
    if (j.contains("clock")) c.clock = parse_clock_mode(j.at("clock").get<std::string>());
    c.seed = j.value("seed", defaults.seed);
  } catch (const json::exception& e) {
    bad_config(e.what());
  }
  return c;
}

BenchConfig BenchConfig::from_json(const json& j) { return from_json(j, BenchConfig{}); }

LatencySummary summarize_latencies(std::vector<std::int64_t> samples) {
  LatencySummary s;
  static const std::vector<std::int64_t> bounds = [] {
    std::vector<std::int64_t> b;
    for (std::int64_t decade = 100'000; decade <= 10'000'000'000LL; decade *= 10) {
      for (int m : {1, 2, 5}) b.push_back(decade * m);
    }
    b.push_back(100'000'000'000LL);
    return b;
  }();
  for (auto b : bounds) s.histogram.push_back({b, 0});
  s.histogram.push_back({std::numeric_limits<std::int64_t>::max(), 0});
  if (samples.empty()) return s;
  std::sort(samples.begin(), samples.end());
  s.count = samples.size();
  auto rank = [&](double q) {
    const auto n = samples.size();
    auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
    return samples[std::clamp<std::size_t>(k, 1, n) - 1];
  };
  s.p50_ns = rank(0.50);
  s.p90_ns = rank(0.90);
  s.p99_ns = rank(0.99);
  s.min_ns = samples.front();
  s.max_ns = samples.back();
  for (auto v : samples) {
    auto it = std::find_if(s.histogram.begin(), s.histogram.end(), [&](const auto& b) { return v <= b.upper_ns; });
    ++it->count;
  }
  return s;
}

namespace {

json latency_json(const LatencySummary& l) {
  json hist = json::array();
  for (const auto& b : l.histogram) {
    hist.push_back({{"le_ns", b.upper_ns == std::numeric_limits<std::int64_t>::max() ? json("inf") : json(b.upper_ns)},
                    {"count", b.count}});
  }
  return {{"count", l.count},   {"p50_ns", l.p50_ns}, {"p90_ns", l.p90_ns},  {"p99_ns", l.p99_ns},
          {"min_ns", l.min_ns}, {"max_ns", l.max_ns}, {"histogram", hist}};
}

LatencySummary latency_from_json(const json& j) {
  LatencySummary l;
  l.count = j.at("count");
  l.p50_ns = j.at("p50_ns");
  l.p90_ns = j.at("p90_ns");
  l.p99_ns = j.at("p99_ns");
  l.min_ns = j.at("min_ns");
  l.max_ns = j.at("max_ns");
  for (const auto& b : j.at("histogram")) {
    const auto& le = b.at("le_ns");
    l.histogram.push_back(
        {le.is_string() ? std::numeric_limits<std::int64_t>::max() : le.get<std::int64_t>(), b.at("count")});
  }
  return l;
}

}  // namespace

json BenchResult::to_json() const {
  json samples_json = json::array();
  for (const auto& s : samples) {
    samples_json.push_back({{"t_s", s.t_s},
                            {"cpu_pct", s.cpu_pct},
                            {"rss_bytes", s.rss_bytes},
                            {"orderer_cpu_pct", s.orderer_cpu_pct},
                            {"peer_cpu_pct", s.peer_cpu_pct}});
  }
  return {{"config", config.to_json()},
          {"submitted", submitted},
          {"valid", valid},
          {"invalid", invalid},
          {"rejected", rejected},
          {"in_flight", in_flight},
          {"invalid_codes", invalid_codes},
          {"window_valid", window_valid},
          {"window_s", window_s},
          {"throughput_tps", throughput_tps},
          {"latency", latency_json(latency)},
          {"samples", samples_json},
          {"avg_cpu_pct", avg_cpu_pct},
          {"avg_orderer_cpu_pct", avg_orderer_cpu_pct},
          {"avg_peer_cpu_pct", avg_peer_cpu_pct},
          {"max_rss_bytes", max_rss_bytes}};
}

BenchResult BenchResult::from_json(const json& j) {
  BenchResult r;
  try {
    r.config = BenchConfig::from_json(j.at("config"));
    r.submitted = j.at("submitted");
    r.valid = j.at("valid");
    r.invalid = j.at("invalid");
    r.rejected = j.at("rejected");
    r.in_flight = j.at("in_flight");
    r.invalid_codes = j.at("invalid_codes").get<std::map<std::string, std::uint64_t>>();
    r.window_valid = j.at("window_valid");
    r.window_s = j.at("window_s");
    r.throughput_tps = j.at("throughput_tps");
    r.latency = latency_from_json(j.at("latency"));
    for (const auto& s : j.at("samples")) {
      r.samples.push_back(
          {s.at("t_s"), s.at("cpu_pct"), s.at("rss_bytes"), s.at("orderer_cpu_pct"), s.at("peer_cpu_pct")});
    }
    r.avg_cpu_pct = j.at("avg_cpu_pct");
    r.avg_orderer_cpu_pct = j.at("avg_orderer_cpu_pct");
    r.avg_peer_cpu_pct = j.at("avg_peer_cpu_pct");
    r.max_rss_bytes = j.at("max_rss_bytes");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::decode_error, std::string("bench result: ") + e.what());
  }
  return r;
}

namespace {

/// Shared by every client of one run; confined to the network executor.
class Driver {
 public:
  Driver(const BenchConfig& config, Network& net, Executor& ex) : config_(config), ex_(ex) {
    for (std::uint32_t i = 0; i < config.num_clients; ++i) {
      auto id = net.issue_identity("Org1", "bench.client" + std::to_string(i), Role::client);
      Encoder salt;
      salt.u64(config.seed).u64(i);
      clients_.push_back(net.client(id, kChannel, std::move(salt).take()));
      next_seq_.push_back(1);
    }
  }

  void start() {
    start_ = ex_.now();
    end_ = start_ + seconds_to_duration(config_.duration_s);
    window_start_ = start_ + seconds_to_duration(config_.warmup_s);
    if (config_.mode == ClientMode::synchronous) {
      for (std::size_t i = 0; i < clients_.size(); ++i) submit(i, ex_.now());
    } else {
      schedule_open_loop(0);
    }
  }

  Timestamp end() const { return end_; }
  Timestamp start_time() const { return start_; }

  /// Stops issuing and freezes the counters.
  void cutoff(BenchResult& r) {
    stopped_ = true;
    r.submitted = submitted_;
    r.valid = valid_;
    r.invalid = invalid_;
    r.rejected = rejected_;
    r.in_flight = submitted_ - valid_ - invalid_ - rejected_;
    r.invalid_codes = invalid_codes_;
    r.window_valid = window_latencies_.size();
    r.window_s = config_.duration_s - config_.warmup_s;
    r.throughput_tps = static_cast<double>(r.window_valid) / r.window_s;
    r.latency = summarize_latencies(window_latencies_);
  }

 private:
  void schedule_open_loop(std::uint64_t k) {
    const auto when = start_ + Duration(std::llround(static_cast<double>(k) * 1e9 / config_.rate_hz));
    if (when >= end_) return;
    ex_.schedule_at(when, [this, k, when] {
      if (stopped_) return;
      submit(static_cast<std::size_t>(k % clients_.size()), when);
      schedule_open_loop(k + 1);
    });
  }

  void submit(std::size_t client, Timestamp submit_time) {
    if (stopped_ || ex_.now() >= end_) return;
    const auto seq = next_seq_[client]++;
    ++submitted_;
    Invocation inv{std::string(contracts::kPathChaincode),
                   "CreateAsset",
                   {"bench" + std::to_string(client), std::to_string(seq), "1", "2", "0", "0",
                    std::to_string(submit_time.count()), "Org1"}};
    clients_[client]->submit(
        inv, [this, client](const SubmitOutcome& o) { on_done(client, o); }, {}, submit_time);
  }

  void on_done(std::size_t client, const SubmitOutcome& o) {
    if (stopped_) return;
    if (o.code == ValidationCode::valid) {
      ++valid_;
      if (o.commit_time >= window_start_ && o.commit_time < end_) {
        window_latencies_.push_back((o.commit_time - o.submit_time).count());
      }
    } else if (o.code) {
      ++invalid_;
      ++invalid_codes_[std::string(fleetledger::to_string(*o.code))];
    } else {
      ++rejected_;
      spdlog::debug("bench: transaction rejected: {}", o.error);
    }
    if (config_.mode != ClientMode::synchronous) return;
    if (o.code && config_.think_time_s == 0) {
      ex_.post([this, client] { submit(client, ex_.now()); });
    } else if (o.code) {
      ex_.schedule_after(seconds_to_duration(config_.think_time_s), [this, client] { submit(client, ex_.now()); });
    } else {
      ex_.schedule_after(std::chrono::milliseconds(1), [this, client] { submit(client, ex_.now()); });
    }
  }

  BenchConfig config_;
  Executor& ex_;
  std::vector<std::unique_ptr<ChannelClient>> clients_;
  std::vector<std::uint64_t> next_seq_;
  Timestamp start_{}, end_{}, window_start_{};
  bool stopped_ = false;
  std::uint64_t submitted_ = 0, valid_ = 0, invalid_ = 0, rejected_ = 0;
  std::map<std::string, std::uint64_t> invalid_codes_;
  std::vector<std::int64_t> window_latencies_;
};

NetworkSpec bench_spec(const BenchConfig& config) {
  auto spec = NetworkSpec::default_spec();
  Encoder e;
  e.str("bench-seed").u64(config.seed);
  spec.seed = crypto::sha256(std::move(e).take());
  return spec;
}

OrdererConfig orderer_config(const BenchConfig& config) {
  OrdererConfig oc;
  oc.batch_timeout = seconds_to_duration(config.batch_timeout_s);
  oc.max_message_count = config.max_message_count;
  oc.max_batch_bytes = config.max_batch_bytes;
  return oc;
}

void average_samples(BenchResult& r) {
  if (r.samples.empty()) return;
  double cpu = 0, ord = 0, peer = 0;
  for (const auto& s : r.samples) {
    cpu += s.cpu_pct;
    ord += s.orderer_cpu_pct;
    peer += s.peer_cpu_pct;
    r.max_rss_bytes = std::max(r.max_rss_bytes, s.rss_bytes);
  }
  const auto n = static_cast<double>(r.samples.size());
  r.avg_cpu_pct = cpu / n;
  r.avg_orderer_cpu_pct = ord / n;
  r.avg_peer_cpu_pct = peer / n;
}

BenchResult run_logical(const BenchConfig& config) {
  BenchResult result;
  result.config = config;
  LogicalExecutor ex;
  auto net = Network::bring_up(ex, bench_spec(config));
  net->deploy_channel(kChannel, {"Org1", "Org2"}, orderer_config(config), contracts::standard_contracts());
  ex.run_until_idle();
  Driver driver(config, *net, ex);
  driver.start();
  ex.run_until(driver.end() - Duration(1));
  driver.cutoff(result);
  return result;
}

/// Samples process and component CPU once a second until stopped.
class Sampler {
 public:
  Sampler(Orderer& orderer, std::vector<Peer*> peers) : orderer_(orderer), peers_(std::move(peers)) {
    thread_ = std::thread([this] { loop(); });
  }
  ~Sampler() { stop(); }

  void stop() {
    {
      std::lock_guard lock(mu_);
      stop_ = true;
    }
    cv_.notify_one();
    if (thread_.joinable()) thread_.join();
  }
  std::vector<ResourceSample> samples() {
    std::lock_guard lock(mu_);
    return samples_;
  }

 private:
  std::int64_t peer_cpu() const {
    std::int64_t total = 0;
    for (auto* p : peers_) total += p->cpu().total_ns();
    return total;
  }

  void loop() {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    auto last_wall = t0;
    auto last = sample_process();
    auto last_ord = orderer_.cpu().total_ns();
    auto last_peer = peer_cpu();
    std::unique_lock lock(mu_);
    for (int k = 1;; ++k) {
      if (cv_.wait_until(lock, t0 + std::chrono::seconds(k), [&] { return stop_; })) return;
      const auto now = clock::now();
      const auto cur = sample_process();
      const auto ord = orderer_.cpu().total_ns();
      const auto peer = peer_cpu();
      const auto wall = static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(now - last_wall).count());
      ResourceSample s;
      s.t_s = std::chrono::duration<double>(now - t0).count();
      s.cpu_pct = 100.0 * static_cast<double>(cur.cpu_ns - last.cpu_ns) / wall;
      s.rss_bytes = cur.rss_bytes;
      s.orderer_cpu_pct = 100.0 * static_cast<double>(ord - last_ord) / wall;
      s.peer_cpu_pct = 100.0 * static_cast<double>(peer - last_peer) / wall;
      samples_.push_back(s);
      last_wall = now;
      last = cur;
      last_ord = ord;
      last_peer = peer;
    }
  }

  Orderer& orderer_;
  std::vector<Peer*> peers_;
  std::mutex mu_;
  std::condition_variable cv_;
  bool stop_ = false;
  std::vector<ResourceSample> samples_;
  std::thread thread_;
};

BenchResult run_realtime(const BenchConfig& config) {
  BenchResult result;
  result.config = config;
  RealtimeExecutor ex;
  std::unique_ptr<Network> net;
  std::unique_ptr<Driver> driver;
  ex.run_sync([&] {
    net = Network::bring_up(ex, bench_spec(config));
    net->deploy_channel(kChannel, {"Org1", "Org2"}, orderer_config(config), contracts::standard_contracts());
  });
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  auto* orderer = &net->orderer();
  const auto peers = ex.run_sync([&] { return net->peers(); });
  Sampler sampler(*orderer, peers);

  std::promise<void> done;
  auto finished = done.get_future();
  ex.run_sync([&] {
    driver = std::make_unique<Driver>(config, *net, ex);
    driver->start();
    ex.schedule_at(driver->end(), [&] {
      driver->cutoff(result);
      done.set_value();
    });
  });
  finished.wait();
  sampler.stop();
  result.samples = sampler.samples();
  average_samples(result);
  ex.run_sync([&] {
    driver.reset();
    net.reset();
  });
  ex.stop();
  return result;
}

}  // namespace

BenchResult run_bench(const BenchConfig& config) {
  config.validate();
  return config.clock == ClockMode::logical ? run_logical(config) : run_realtime(config);
}

std::vector<BenchResult> sweep(const std::vector<BenchConfig>& configs,
                               const std::function<void(const BenchResult&)>& on_result) {
  for (const auto& c : configs) c.validate();
  std::vector<BenchResult> out;
  for (const auto& c : configs) {
    out.push_back(run_bench(c));
    if (on_result) on_result(out.back());
  }
  return out;
}

const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols = {
      "label",        "batch_timeout_s", "max_message_count", "mode",      "rate_hz",       "clients",
      "duration_s",   "warmup_s",        "clock",             "submitted", "valid",         "invalid",
      "rejected",     "in_flight",       "throughput_tps",    "p50_ms",    "p90_ms",        "p99_ms",
      "min_ms",       "max_ms",          "avg_cpu_pct",       "orderer_cpu_pct", "peer_cpu_pct", "max_rss_mib"};
  return cols;
}

namespace {

std::string fmt(double v, int decimals) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(decimals);
  os << v;
  return os.str();
}

std::string ms(std::int64_t ns) { return fmt(static_cast<double>(ns) / 1e6, 3); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string csv_row(const BenchResult& r) {
  const auto& c = r.config;
  const std::vector<std::string> fields = {csv_field(c.display_label()),
                                           trim_number(c.batch_timeout_s),
                                           std::to_string(c.max_message_count),
                                           std::string(to_string(c.mode)),
                                           trim_number(c.rate_hz),
                                           std::to_string(c.num_clients),
                                           trim_number(c.duration_s),
                                           trim_number(c.warmup_s),
                                           std::string(to_string(c.clock)),
                                           std::to_string(r.submitted),
                                           std::to_string(r.valid),
                                           std::to_string(r.invalid),
                                           std::to_string(r.rejected),
                                           std::to_string(r.in_flight),
                                           fmt(r.throughput_tps, 3),
                                           ms(r.latency.p50_ns),
                                           ms(r.latency.p90_ns),
                                           ms(r.latency.p99_ns),
                                           ms(r.latency.min_ns),
                                           ms(r.latency.max_ns),
                                           fmt(r.avg_cpu_pct, 1),
                                           fmt(r.avg_orderer_cpu_pct, 1),
                                           fmt(r.avg_peer_cpu_pct, 1),
                                           fmt(static_cast<double>(r.max_rss_bytes) / (1024.0 * 1024.0), 1)};
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) line += ',';
    line += fields[i];
  }
  return line;
}

std::string to_csv(const std::vector<BenchResult>& results) {
  std::string out;
  const auto& cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i) out += ',';
    out += cols[i];
  }
  out += '\n';
  for (const auto& r : results) out += csv_row(r) + '\n';
  return out;
}

json to_json(const std::vector<BenchResult>& results) {
  json arr = json::array();
  for (const auto& r : results) arr.push_back(r.to_json());
  return {{"columns", csv_columns()}, {"results", arr}};
}

std::vector<BenchResult> results_from_json(const json& j) {
  std::vector<BenchResult> out;
  if (j.is_object() && j.contains("results")) return results_from_json(j.at("results"));
  if (j.is_object()) {
    out.push_back(BenchResult::from_json(j));
  } else if (j.is_array()) {
    for (const auto& r : j) out.push_back(BenchResult::from_json(r));
  } else {
    throw Error(ErrorCode::decode_error, "bench results must be an object or an array");
  }
  return out;
}

Metric parse_metric(std::string_view s) {
  if (s == "throughput") return Metric::throughput;
  if (s == "p50") return Metric::p50;
  throw Error(ErrorCode::invalid_argument, "metric must be throughput or p50, got '" + std::string(s) + "'");
}

double metric_value(const BenchResult& r, Metric m) {
  return m == Metric::throughput ? r.throughput_tps : static_cast<double>(r.latency.p50_ns) / 1e6;
}

std::vector<std::string> check_order(const std::vector<BenchResult>& results, Metric metric,
                                     const std::vector<std::string>& labels, double min_ratio) {
  std::vector<std::string> problems;
  std::vector<double> values;
  for (const auto& l : labels) {
    auto it = std::find_if(results.begin(), results.end(),
                           [&](const BenchResult& r) { return r.config.display_label() == l; });
    if (it == results.end()) {
      problems.push_back("no result labelled " + l);
      return problems;
    }
    values.push_back(metric_value(*it, metric));
  }
  const auto name = metric == Metric::throughput ? "throughput" : "p50";
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (!(values[i - 1] > values[i])) {
      problems.push_back(std::string(name) + "(" + labels[i - 1] + ")=" + fmt(values[i - 1], 3) + " is not above " +
                         name + "(" + labels[i] + ")=" + fmt(values[i], 3));
    }
  }
  if (values.size() >= 2 && min_ratio > 1.0) {
    const double ratio = values.back() > 0 ? values.front() / values.back() : std::numeric_limits<double>::infinity();
    if (!(ratio >= min_ratio)) {
      problems.push_back(labels.front() + ":" + labels.back() + " ratio " + fmt(ratio, 2) + " is below " +
                         fmt(min_ratio, 2));
    }
  }
  return problems;
}

}  // namespace fleetledger::bench
