// Acceptance properties P1-P8. Prints one PASS/FAIL line per property and
// exits non-zero when any fails.

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "coverage_oracle.hpp"
#include "cut_oracle.hpp"
#include "fleetledger/bench.hpp"
#include "fleetledger/contracts.hpp"
#include "fleetledger/error.hpp"
#include "fleetledger/gateway.hpp"
#include "fleetledger/http_api.hpp"
#include "fleetledger/ledger.hpp"
#include "fleetledger/network.hpp"
#include "fleetledger/orderer.hpp"
#include "fleetledger/recorder.hpp"
#include "gate_oracle.hpp"
#include "ledger_fixtures.hpp"
#include "mvcc_oracle.hpp"
#include "net_fixture.hpp"

using namespace fleetledger;
using namespace std::chrono_literals;
using nlohmann::json;

namespace {

// Pinned tolerances.
constexpr int kP1Traces = 1000;
constexpr double kP1Budget_s = 10;
constexpr int kP2Blocks = 50;
constexpr std::size_t kP2Mutations = 5000;
constexpr double kP2Budget_s = 30;
constexpr int kP3Scenarios = 500;
constexpr double kP3Budget_s = 10;
constexpr double kP5MinRatio = 2.0;
constexpr double kP5LatencyFactor = 4.0;
constexpr double kP5Budget_s = 300;
constexpr std::size_t kP6Fast[2] = {270, 301};
constexpr std::size_t kP6Slow[2] = {12, 13};
constexpr int kP6Traces = 1000;
constexpr double kP7TrajectoryTolerance = 1;
constexpr double kP7Budget_s = 60;
constexpr int kP8Commands = 8;

struct Outcome {
  bool pass = true;
  std::string detail;
};

/// Collects failures; the first few are reported.
struct Checker {
  std::vector<std::string> failures;
  std::vector<std::string> notes;
  void expect(bool cond, const std::string& what) {
    if (!cond) failures.push_back(what);
  }
  void note(const std::string& s) { notes.push_back(s); }
  Outcome outcome() const {
    Outcome o;
    o.pass = failures.empty();
    std::ostringstream os;
    if (!o.pass) {
      os << failures.size() << " failure(s): ";
      for (std::size_t i = 0; i < failures.size() && i < 3; ++i) os << (i ? "; " : "") << failures[i];
    } else {
      for (std::size_t i = 0; i < notes.size(); ++i) os << (i ? ", " : "") << notes[i];
    }
    o.detail = os.str();
    return o;
  }
};

std::string num(double v, int decimals = 2) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(decimals);
  os << v;
  return os.str();
}

const fixtures::TestOrgs& orgs() {
  static const fixtures::TestOrgs instance;
  return instance;
}

Transaction tx_writing(const std::string& key, const std::string& value, std::uint64_t nonce) {
  fixtures::TxSpec spec;
  spec.writes = {fixtures::put(key, value)};
  return fixtures::make_tx(orgs(), spec, orgs().client1, nonce);
}

// ---------------------------------------------------------------- P1

struct CutHarness {
  explicit CutHarness(OrdererConfig config) : orderer(ex, orgs().orderer) {
    orderer.create_channel("ch", config, orgs().roots,
                           make_genesis_block("ch", to_bytes("cfg"), orgs().orderer, Timestamp{0}));
    orderer.deliver("ch", 1, [this](const Block& b) { delivered.push_back(b); });
  }
  LogicalExecutor ex;
  Orderer orderer;
  std::vector<Block> delivered;
};

Outcome p1_block_cutting() {
  Checker c;
  // Signed transactions are reused across traces; each trace has its own orderer.
  std::vector<Transaction> pool;
  for (std::uint64_t i = 1; i <= 40; ++i) pool.push_back(tx_writing("k" + std::to_string(i), std::string(i * 23, 'x'), i));
  std::mt19937_64 rng(20240901);
  std::size_t blocks = 0;
  int lone_checks = 0;
  for (int trace = 0; trace < kP1Traces; ++trace) {
    const auto bt_ns = static_cast<std::int64_t>(1'000'000 + rng() % 2'000'000'000);
    const auto m = static_cast<std::uint32_t>(1 + rng() % 12);
    const std::uint64_t cap = rng() % 4 == 0 ? 1500 + rng() % 4000 : 0;
    OrdererConfig cfg;
    cfg.batch_timeout = Duration(bt_ns);
    cfg.max_message_count = m;
    cfg.max_batch_bytes = cap;
    CutHarness h(cfg);
    std::vector<oracle::Arrival> arrivals;
    std::int64_t t = static_cast<std::int64_t>(rng() % 1'000'000);
    const auto n = 1 + rng() % pool.size();
    for (std::size_t i = 0; i < n; ++i) {
      const auto gap = rng() % 3;
      t += gap == 0 ? 0 : static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(bt_ns * (gap == 1 ? 1 : 3) / 2));
      const auto& tx = pool[i];
      arrivals.push_back({t, tx.serialize().size()});
      h.ex.schedule_at(Timestamp{t}, [&h, &tx] { h.orderer.submit(tx); });
    }
    h.ex.run_until_idle();
    const auto expected = oracle::simulate_cuts(arrivals, {bt_ns, m, cap});
    std::vector<oracle::Cut> got;
    for (const auto& b : h.delivered) {
      if (b.transactions.empty() || b.transactions.size() > m) {
        c.expect(false, "trace " + std::to_string(trace) + ": block of " + std::to_string(b.transactions.size()));
      }
      auto reason = oracle::Reason::timeout;
      if (b.cut_reason == CutReason::max_messages) reason = oracle::Reason::max_messages;
      if (b.cut_reason == CutReason::max_bytes) reason = oracle::Reason::max_bytes;
      got.push_back({b.transactions.size(), b.cut_time.count(), reason});
    }
    blocks += got.size();
    c.expect(got == expected, "trace " + std::to_string(trace) + ": cuts differ from the oracle");

    // A lone tx that triggers neither the count nor the byte cap.
    const auto arrival = static_cast<std::int64_t>(rng() % 5'000'000'000);
    if (m > 1 && (cap == 0 || pool.front().serialize().size() < cap)) {
      CutHarness lone(cfg);
      lone.ex.schedule_at(Timestamp{arrival}, [&] { lone.orderer.submit(pool.front()); });
      lone.ex.run_until_idle();
      const bool exact = lone.delivered.size() == 1 && lone.delivered[0].cut_time == Timestamp{arrival + bt_ns};
      c.expect(exact, "trace " + std::to_string(trace) + ": lone tx not cut at arrival + BT");
      ++lone_checks;
    }
  }
  c.note(std::to_string(kP1Traces) + " traces, " + std::to_string(blocks) + " blocks match the oracle");
  c.note(std::to_string(lone_checks) + " lone txs cut at arrival + BT");
  return c.outcome();
}

// ---------------------------------------------------------------- P2

Outcome p2_ledger_integrity() {
  Checker c;
  std::vector<std::vector<Transaction>> batches;
  std::mt19937_64 rng(77);
  std::uint64_t nonce = 0;
  for (int b = 1; b < kP2Blocks; ++b) {
    std::vector<Transaction> batch;
    for (int t = 0; t < 2 + static_cast<int>(rng() % 3); ++t) {
      batch.push_back(tx_writing("key" + std::to_string(rng() % 12), "b" + std::to_string(b), ++nonce));
    }
    batches.push_back(std::move(batch));
  }
  const auto chain = fixtures::make_chain(orgs(), batches);
  c.expect(chain.size() == static_cast<std::size_t>(kP2Blocks), "chain length");

  ChannelLedger live("ch");
  for (const auto& b : chain) {
    live.append_block(b);
    live.commit_last(orgs().policy);
  }
  std::vector<Bytes> files;
  for (const auto& b : live.blocks()) files.push_back(encode_block_file(b));
  c.expect(verify_chain_files(files).ok, "untouched chain fails verification");
  const auto missed = oracle::undetected_mutations(files, kP2Mutations, 4242);
  c.expect(missed == 0, std::to_string(missed) + " mutation(s) undetected");

  std::vector<Block> decoded;
  for (const auto& f : files) decoded.push_back(decode_block_file(f));
  const auto replayed = replay(decoded, orgs().policy).dump();
  c.expect(replayed == live.state().dump(), "replayed dump differs from the live dump");
  c.note(std::to_string(chain.size()) + " blocks, " + std::to_string(kP2Mutations) + " mutations detected");
  c.note("replay dump byte-identical (" + std::to_string(replayed.size()) + " bytes)");
  return c.outcome();
}

// ---------------------------------------------------------------- P3

Outcome p3_mvcc() {
  Checker c;
  std::size_t txs = 0, conflicts = 0;
  for (int s = 1; s <= kP3Scenarios; ++s) {
    const auto r = oracle::run_mvcc_scenario(orgs(), static_cast<std::uint64_t>(s));
    c.expect(r.ok, "scenario " + std::to_string(s) + ": " + r.detail);
    txs += r.transactions;
    conflicts += r.conflicts;
  }

  // Two transactions that read and write the same key in one block.
  std::mt19937_64 rng(5);
  std::uint64_t nonce = 1'000'000;
  int pairs_ok = 0;
  constexpr int kPairs = 100;
  for (int p = 0; p < kPairs; ++p) {
    const auto key = "key" + std::to_string(rng() % 5);
    WorldState state;
    auto setup = fixtures::make_chain(orgs(), {{tx_writing(key, "seed", ++nonce)}});
    for (auto& b : setup) validate_and_commit(state, b, orgs().policy);
    const auto version = state.find(key)->version;
    std::vector<Transaction> block_txs;
    for (int k = 0; k < static_cast<int>(rng() % 3); ++k) {
      block_txs.push_back(tx_writing("other" + std::to_string(k), "x", ++nonce));
    }
    for (int side = 0; side < 2; ++side) {
      fixtures::TxSpec spec;
      spec.reads = {ReadItem{key, version}};
      spec.writes = {fixtures::put(key, "side" + std::to_string(side))};
      block_txs.push_back(fixtures::make_tx(orgs(), spec, orgs().client1, ++nonce));
    }
    std::shuffle(block_txs.begin(), block_txs.end(), rng);
    Batch batch{block_txs, CutReason::timeout, Timestamp(2)};
    auto block = assemble_block(&setup.back(), std::move(batch));
    const auto codes = validate_and_commit(state, block, orgs().policy);
    int valid = 0;
    for (std::size_t i = 0; i < codes.size(); ++i) {
      const bool on_key = !block.transactions[i].rwset.reads.empty();
      if (on_key && codes[i] == ValidationCode::valid) ++valid;
    }
    if (valid == 1) ++pairs_ok;
  }
  c.expect(pairs_ok == kPairs, std::to_string(kPairs - pairs_ok) + " read-write pair(s) without exactly one VALID");
  c.expect(conflicts > 0, "no conflicts exercised");
  c.note(std::to_string(kP3Scenarios) + " scenarios, " + std::to_string(txs) + " txs, " + std::to_string(conflicts) +
         " conflicts match the sequential model");
  c.note(std::to_string(kPairs) + " same-block pairs each yield one VALID");
  return c.outcome();
}

// ---------------------------------------------------------------- P4

SubmitOutcome submit_and_wait(LogicalExecutor& ex, LedgerClient& client, Invocation inv) {
  std::optional<SubmitOutcome> out;
  client.submit(inv, [&](const SubmitOutcome& o) { out = o; });
  while (!out && ex.step()) {
  }
  ex.run_until_idle();
  return out.value_or(SubmitOutcome{});
}

template <class F>
std::optional<ErrorCode> code_of(F&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

Outcome p4_permissioning() {
  Checker c;
  LogicalExecutor ex;
  auto net = Network::bring_up(ex, NetworkSpec::default_spec());
  const auto contracts = contracts::standard_contracts();
  const Invocation create{"path", "CreateAsset", {"ground", "1", "1", "2", "0", "0", "1000", "Org1"}};

  // A channel Org2 is not part of.
  net->deploy_channel("org1only", {"Org1"}, fixtures::fast_orderer(), contracts);
  ex.run_until_idle();
  auto outsider = net->issue_identity("Org2", "user.org2", Role::client);
  auto& org1_peer = net->peer("peer0.org1");
  ChannelClient intruder(ex, outsider, "org1only", {&org1_peer}, net->orderer(), org1_peer, 1);
  const auto rejected = submit_and_wait(ex, intruder, create);
  c.expect(!rejected.ordered && rejected.error.find("not-a-member") != std::string::npos,
           "non-member endorsement was not refused: " + rejected.error);
  Transaction forged;
  forged.channel = "org1only";
  forged.creator = outsider.certificate();
  c.expect(net->orderer().submit(forged) == SubmitStatus::not_a_member, "orderer accepted a non-member");
  c.expect(org1_peer.ledger("org1only").state().size() == 0, "non-member write reached the state");

  // Installed and approved by one org, not committed.
  net->create_channel("ch", {"Org1", "Org2"}, fixtures::fast_orderer());
  for (const auto& p : {"peer0.org1", "peer0.org2"}) {
    net->join_peer("ch", p);
    for (const auto& cc : contracts) net->install_chaincode(p, cc);
  }
  net->set_anchor_peer("ch", "Org1", "peer0.org1");
  net->set_anchor_peer("ch", "Org2", "peer0.org2");
  ex.run_until_idle();
  auto client = net->client(net->gateway_identity(), "ch");
  const auto early = submit_and_wait(ex, *client, create);
  c.expect(!early.ordered && early.error.find("unknown-chaincode") != std::string::npos,
           "invoke before commit: " + early.error);

  ChaincodeDefinition def;
  def.name = "path";
  def.sequence = 1;
  net->approve_chaincode("ch", "Org1", def);
  c.expect(code_of([&] { net->commit_chaincode("ch", "path"); }) == ErrorCode::insufficient_approvals,
           "1-of-2 approvals committed");
  c.expect(!net->channel("ch").is_committed("path"), "definition committed after a refused commit");
  net->approve_chaincode("ch", "Org2", def);
  c.expect(!code_of([&] { net->commit_chaincode("ch", "path"); }).has_value(), "2-of-2 approvals refused");
  c.expect(net->channel("ch").is_committed("path"), "definition not committed");
  c.expect(majority_of(2) == 2 && majority_of(3) == 2 && majority_of(5) == 3, "majority threshold");
  ex.run_until_idle();
  const auto late = submit_and_wait(ex, *client, create);
  c.expect(late.valid(), "invoke after commit: " + late.error);
  c.note("non-member refused by peer and orderer");
  c.note("UNKNOWN_CHAINCODE before commit");
  c.note("1-of-2 rejected, 2-of-2 committed");
  return c.outcome();
}

// ---------------------------------------------------------------- P5

bench::BenchConfig realtime_run(std::string label, double bt, std::uint32_t m) {
  bench::BenchConfig cfg;
  cfg.label = std::move(label);
  cfg.batch_timeout_s = bt;
  cfg.max_message_count = m;
  cfg.clock = bench::ClockMode::realtime;
  cfg.warmup_s = 2;
  return cfg;
}

Outcome p5_trends() {
  Checker c;
  std::vector<bench::BenchResult> sync_results;
  for (const auto& [label, bt] : std::vector<std::pair<std::string, double>>{{"BT0.025", 0.025}, {"BT0.1", 0.1}, {"BT5", 5}}) {
    auto cfg = realtime_run(label, bt, 100);
    cfg.mode = bench::ClientMode::synchronous;
    cfg.num_clients = 4;
    cfg.duration_s = bt >= 5 ? 14 : 8;
    sync_results.push_back(bench::run_bench(cfg));
    c.expect(sync_results.back().conserved(), label + " does not conserve transactions");
  }
  const auto tps = [&](std::size_t i) { return sync_results[i].throughput_tps; };
  c.expect(tps(0) > tps(1) && tps(1) > tps(2), "throughput not ordered: " + num(tps(0)) + ", " + num(tps(1)) + ", " +
                                                   num(tps(2)) + " tx/s");
  const double ratio = tps(2) > 0 ? tps(0) / tps(2) : INFINITY;
  c.expect(ratio >= kP5MinRatio, "throughput ratio " + num(ratio) + " below " + num(kP5MinRatio));

  std::map<std::uint32_t, bench::BenchResult> open;
  for (std::uint32_t m : {10u, 100u, 1000u}) {
    auto cfg = realtime_run("M" + std::to_string(m), 5, m);
    cfg.mode = bench::ClientMode::open_loop;
    cfg.rate_hz = 200;
    cfg.num_clients = 4;
    cfg.duration_s = 14;
    open.emplace(m, bench::run_bench(cfg));
    c.expect(open.at(m).conserved(), "M" + std::to_string(m) + " does not conserve transactions");
    c.expect(open.at(m).latency.count > 0, "M" + std::to_string(m) + " committed nothing in the window");
  }
  const auto p50 = [&](std::uint32_t m) { return bench::metric_value(open.at(m), bench::Metric::p50); };
  c.expect(p50(1000) > p50(10), "p50(M1000) not above p50(M10)");
  c.expect(p50(100) > kP5LatencyFactor * p50(10), "p50(M100) not above 4x p50(M10)");
  c.expect(p50(1000) > kP5LatencyFactor * p50(10), "p50(M1000) not above 4x p50(M10)");
  c.note("sync M=100 tps " + num(tps(0), 1) + " > " + num(tps(1), 1) + " > " + num(tps(2), 2) + " (ratio " +
         num(ratio, 1) + ")");
  c.note("open-loop BT=5 p50 ms M10 " + num(p50(10), 0) + ", M100 " + num(p50(100), 0) + ", M1000 " +
         num(p50(1000), 0));
  if (!c.failures.empty()) {
    c.failures.push_back("measured " + c.notes[0] + "; " + c.notes[1]);
  }
  return c.outcome();
}

// ---------------------------------------------------------------- P6

std::size_t recorded_over_network(double max_freq) {
  fixtures::TestNet t;
  sim::TopicBus bus;
  recorder::RecorderConfig cfg;
  cfg.data_topic = sim::pose_topic("ground");
  cfg.max_freq = max_freq;
  recorder::Recorder rec(*t.client, cfg);
  rec.attach(bus, cfg.data_topic);
  // 60 s at 30 Hz on the logical clock, one message per tick.
  for (std::int64_t k = 0; k < 1800; ++k) {
    const auto stamp = std::llround(static_cast<double>(k) * 1e9 / 30.0);
    t.ex.run_until(Timestamp{stamp});
    bus.publish({cfg.data_topic, stamp, sim::PoseMsg{"ground", {0.1, 0.2, 0, 0}}});
  }
  t.ex.run_until_idle();
  const auto all = json::parse(t.read("path", "ReadTrajectory", {"ground"}));
  return rec.stats().durable == rec.stats().recorded && all.size() == rec.stats().recorded ? all.size() : 0;
}

Outcome p6_recorder_gate() {
  Checker c;
  const auto fast = recorded_over_network(5);
  const auto slow = recorded_over_network(0.2);
  c.expect(fast >= kP6Fast[0] && fast <= kP6Fast[1], "5 Hz recorded " + std::to_string(fast));
  c.expect(slow >= kP6Slow[0] && slow <= kP6Slow[1], "0.2 Hz recorded " + std::to_string(slow));
  std::mt19937_64 rng(31337);
  int agree = 0;
  for (int i = 0; i < kP6Traces; ++i) {
    const auto trace = oracle::random_gate_trace(rng);
    recorder::RateGate gate(trace.max_freq);
    std::vector<std::size_t> kept;
    for (std::size_t k = 0; k < trace.stamps.size(); ++k) {
      if (gate.admit(trace.stamps[k])) kept.push_back(k);
    }
    if (kept == oracle::gate_replay(trace.stamps, trace.max_freq) &&
        oracle::check_gate_properties(trace.stamps, kept, trace.max_freq).empty()) {
      ++agree;
    }
  }
  c.expect(agree == kP6Traces, std::to_string(kP6Traces - agree) + " trace(s) disagree with the replay oracle");
  c.note("5 Hz: " + std::to_string(fast) + " records, 0.2 Hz: " + std::to_string(slow) + " records");
  c.note(std::to_string(agree) + "/" + std::to_string(kP6Traces) + " traces agree");
  return c.outcome();
}

// ---------------------------------------------------------------- P7

Outcome p7_mission() {
  Checker c;
  const auto world = sim::WorldModel::default_world();
  const auto mission = sim::MissionSpec::default_mission(world);
  c.expect(std::abs(world.area() - 40) < 0.1, "world area " + num(world.area()));

  LogicalExecutor ex;
  auto net = Network::bring_up(ex, NetworkSpec::default_spec());
  net->deploy_channel("mychannel", {"Org1", "Org2"}, OrdererConfig{}, contracts::standard_contracts());
  ex.run_until_idle();
  std::map<std::string, std::unique_ptr<ChannelClient>> clients;
  for (const auto& r : mission.robots) {
    const auto org = r.kind == sim::RobotKind::aerial ? "Org2" : "Org1";
    clients[r.id] = net->client(net->issue_identity(org, "recorder." + r.id, Role::client), "mychannel",
                                to_bytes(r.id));
  }
  recorder::MissionRunner runner(ex, world, mission,
                                 [&](const std::string& id) -> LedgerClient& { return *clients.at(id); });
  bool finished = false;
  runner.on_finished([&] { finished = true; });
  runner.start();
  ex.run_until_idle();
  c.expect(finished, "mission did not finish");

  auto& peer = net->peer("peer0.org1");
  const auto objects = json::parse(to_string(peer.query("mychannel", "object", "ReadAllAssets", {})));
  std::map<std::pair<std::string, std::uint64_t>, int> per_robot_object;
  for (const auto& o : objects) {
    const auto id = o.at("asset_id").get<std::string>();
    const auto seq = std::stoull(id.substr(id.rfind('~') + 1));
    ++per_robot_object[{o.at("robot_id").get<std::string>(), seq}];
    c.expect(seq < world.objects.size() && world.objects[seq].label == o.at("label").get<std::string>(),
             "object asset with a wrong label or index");
  }
  const auto coverage = oracle::path_coverage(world, mission);
  const auto& detected = runner.simulation().detected();
  std::set<std::uint64_t> on_ledger;
  for (const auto& [key, n] : per_robot_object) {
    c.expect(n == 1, key.first + " has " + std::to_string(n) + " assets for object " + std::to_string(key.second));
    c.expect(coverage.at(key.first).count(key.second) == 1,
             key.first + " recorded object " + std::to_string(key.second) + " it could not see");
    on_ledger.insert(key.second);
  }
  for (const auto& [robot, objs] : detected) {
    for (auto o : objs) {
      c.expect(per_robot_object.count({robot, o}) == 1,
               robot + " detected object " + std::to_string(o) + " but it is not on the ledger");
    }
  }
  std::size_t placed = 0;
  for (const auto& shelf : world.shelves) {
    for (auto o : shelf.objects) {
      ++placed;
      c.expect(on_ledger.count(o) == 1, "placed object " + std::to_string(o) + " never recorded");
    }
  }

  const double expected_traj = mission.duration_s * 0.2;
  for (const auto& r : mission.robots) {
    const auto traj = json::parse(to_string(peer.query("mychannel", "path", "ReadTrajectory", {r.id})));
    c.expect(std::abs(static_cast<double>(traj.size()) - expected_traj) <= kP7TrajectoryTolerance,
             r.id + " has " + std::to_string(traj.size()) + " trajectory assets");
  }

  std::optional<std::string> reference;
  for (auto* p : net->channel_peers("mychannel")) {
    const auto dump = p->ledger("mychannel").state().dump();
    if (!reference) reference = dump;
    c.expect(dump == *reference, p->id() + " state differs");
  }
  c.note(std::to_string(placed) + " placed objects, " + std::to_string(per_robot_object.size()) +
         " object assets, one per detecting robot");
  c.note(num(expected_traj, 0) + " +/- 1 trajectory assets per robot");
  c.note("peer dumps byte-equal");
  return c.outcome();
}

// ---------------------------------------------------------------- P8

class SseReader {
 public:
  SseReader(std::uint16_t port, std::string path) {
    thread_ = std::thread([this, port, path] {
      httplib::Client cl("127.0.0.1", port);
      cl.set_read_timeout(30, 0);
      cl.Get(path, [&](const char* data, std::size_t n) {
        std::lock_guard lock(mu_);
        text_.append(data, n);
        return !stop_.load();
      });
    });
  }
  ~SseReader() {
    stop_ = true;
    if (thread_.joinable()) thread_.join();
  }
  /// Occurrences of each tx id across `block` events.
  std::map<std::string, int> tx_counts() {
    std::string all;
    {
      std::lock_guard lock(mu_);
      all = text_;
    }
    std::map<std::string, int> counts;
    std::size_t pos = 0;
    for (auto end = all.find("\n\n"); end != std::string::npos; end = all.find("\n\n", pos)) {
      const auto chunk = all.substr(pos, end - pos);
      pos = end + 2;
      if (chunk.find("event: block\n") == std::string::npos) continue;
      const auto d = chunk.find("data: ");
      if (d == std::string::npos) continue;
      const auto block = json::parse(chunk.substr(d + 6));
      for (const auto& t : block.at("txs")) ++counts[t.at("tx_id").get<std::string>()];
    }
    return counts;
  }

 private:
  std::thread thread_;
  std::mutex mu_;
  std::string text_;
  std::atomic<bool> stop_{false};
};

Outcome p8_gateway() {
  Checker c;
  RealtimeExecutor ex;
  std::unique_ptr<Network> net;
  ex.run_sync([&] {
    net = Network::bring_up(ex, NetworkSpec::default_spec());
    net->deploy_channel("mychannel", {"Org1", "Org2"}, fixtures::fast_orderer(), contracts::standard_contracts());
  });
  {
    gateway::NetworkBackend backend(*net, ex.run_sync([&] { return net->gateway_identity(); }));
    gateway::HttpOptions options;
    options.port = 0;
    options.robots = {"ground", "aerial"};
    options.world = sim::to_json(sim::WorldModel::default_world());
    c.expect(!options.ui_dir.has_value(), "ui dir configured");
    auto api = std::make_unique<gateway::HttpApi>(backend, options);
    api->start();

    std::vector<std::string> tx_ids;
    {
      SseReader reader(api->port(), "/api/events?poses=0");
      std::this_thread::sleep_for(200ms);
      for (int i = 0; i < kP8Commands; ++i) {
        httplib::Client cl("127.0.0.1", api->port());
        const json body{{"robot_id", i % 2 ? "aerial" : "ground"}, {"waypoints", {{1.0 + 0.5 * i, 2.0, 0.0}}}};
        auto r = cl.Post("/api/commands", body.dump(), "application/json");
        c.expect(r && r->status == 202, "POST /api/commands not accepted");
        if (r && r->status == 202) tx_ids.push_back(json::parse(r->body)["tx_id"]);
      }
      const auto deadline = std::chrono::steady_clock::now() + 10s;
      auto counts = reader.tx_counts();
      auto all_seen = [&] {
        return std::all_of(tx_ids.begin(), tx_ids.end(), [&](const auto& id) { return counts.count(id) > 0; });
      };
      while (!all_seen() && std::chrono::steady_clock::now() < deadline) {
        std::this_thread::sleep_for(20ms);
        counts = reader.tx_counts();
      }
      std::this_thread::sleep_for(300ms);
      counts = reader.tx_counts();
      for (const auto& id : tx_ids) {
        c.expect(counts.count(id) && counts.at(id) == 1,
                 "tx " + id.substr(0, 8) + " seen " + std::to_string(counts.count(id) ? counts.at(id) : 0) + " times");
      }
    }

    const std::vector<std::string> paths = {"/api/channels",
                                            "/api/channels/mychannel/assets",
                                            "/api/channels/mychannel/assets?contract=command",
                                            "/api/robots/ground/trajectory",
                                            "/api/objects",
                                            "/api/world"};
    auto fetch = [&](std::uint16_t port) {
      std::vector<std::pair<int, std::string>> out;
      httplib::Client cl("127.0.0.1", port);
      for (const auto& p : paths) {
        auto r = cl.Get(p);
        out.emplace_back(r ? r->status : -1, r ? r->body : "");
      }
      return out;
    };
    const auto before = fetch(api->port());
    api->stop();
    api.reset();
    api = std::make_unique<gateway::HttpApi>(backend, options);
    api->start();
    const auto after = fetch(api->port());
    for (std::size_t i = 0; i < paths.size(); ++i) {
      c.expect(before[i].first == 200, paths[i] + " returned " + std::to_string(before[i].first));
      c.expect(before[i] == after[i], paths[i] + " changed across a restart");
    }
    api->stop();
    c.note(std::to_string(tx_ids.size()) + " POSTs, one commit event each");
    c.note(std::to_string(paths.size()) + " endpoints byte-identical after restart, no UI build");
  }
  ex.run_sync([&] { net.reset(); });
  ex.stop();
  return c.outcome();
}

struct Property {
  const char* id;
  const char* title;
  std::function<Outcome()> run;
  double budget_s;  // 0: no runtime limit
};

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  std::set<std::string> only;
  for (int i = 1; i < argc; ++i) only.insert(argv[i]);
  const std::vector<Property> properties = {
      {"P1", "block cutting", p1_block_cutting, kP1Budget_s},
      {"P2", "ledger integrity", p2_ledger_integrity, kP2Budget_s},
      {"P3", "MVCC", p3_mvcc, kP3Budget_s},
      {"P4", "permissioning and lifecycle", p4_permissioning, 0},
      {"P5", "stress trends", p5_trends, kP5Budget_s},
      {"P6", "recorder gate", p6_recorder_gate, 0},
      {"P7", "end-to-end mission", p7_mission, kP7Budget_s},
      {"P8", "gateway contract", p8_gateway, 0},
  };
  int failed = 0;
  for (const auto& p : properties) {
    if (!only.empty() && !only.count(p.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = p.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (p.budget_s > 0 && secs >= p.budget_s) {
      o.pass = false;
      o.detail += " [over budget: " + num(secs, 1) + " s >= " + num(p.budget_s, 0) + " s]";
    }
    if (!o.pass) ++failed;
    std::cout << p.id << ' ' << (o.pass ? "PASS" : "FAIL") << " (" << num(secs, 2) << " s) " << p.title << ": "
              << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
