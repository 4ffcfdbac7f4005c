#pragma once

// Stress harness: brings up its own two-org network with the requested
// orderer settings, drives path-asset creations from N clients, and
// measures commit latency, throughput and process load.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fleetledger::bench {

enum class ClientMode { synchronous, open_loop };
enum class ClockMode { realtime, logical };

std::string_view to_string(ClientMode m);
std::string_view to_string(ClockMode m);
ClientMode parse_client_mode(std::string_view s);
ClockMode parse_clock_mode(std::string_view s);

struct BenchConfig {
  std::string label;
  double batch_timeout_s = 2.0;
  std::uint32_t max_message_count = 10;
  std::uint64_t max_batch_bytes = 0;
  ClientMode mode = ClientMode::synchronous;
  /// Total offered load in open-loop mode, spread over the clients.
  double rate_hz = 0;
  std::uint32_t num_clients = 1;
  /// Pause of a synchronous client between a commit and its next submit.
  double think_time_s = 0;
  /// Whole run including warmup.
  double duration_s = 30;
  double warmup_s = 2;
  ClockMode clock = ClockMode::realtime;
  std::uint64_t seed = 1;

  /// Throws Error(invalid_argument).
  void validate() const;
  /// "BT<timeout>_M<count>" unless a label was given.
  std::string display_label() const;
  nlohmann::json to_json() const;
  /// Missing keys keep the values of `defaults`.
  static BenchConfig from_json(const nlohmann::json& j, const BenchConfig& defaults);
  static BenchConfig from_json(const nlohmann::json& j);
};

struct HistogramBucket {
  std::int64_t upper_ns;  // INT64_MAX for the overflow bucket
  std::uint64_t count;
};

struct LatencySummary {
  std::uint64_t count = 0;
  std::int64_t p50_ns = 0;
  std::int64_t p90_ns = 0;
  std::int64_t p99_ns = 0;
  std::int64_t min_ns = 0;
  std::int64_t max_ns = 0;
  std::vector<HistogramBucket> histogram;
};

/// Nearest-rank percentiles over exact samples, plus counts in 1-2-5
/// buckets from 100 us to 100 s.
LatencySummary summarize_latencies(std::vector<std::int64_t> samples);

struct ResourceSample {
  double t_s = 0;
  double cpu_pct = 0;
  std::int64_t rss_bytes = 0;
  double orderer_cpu_pct = 0;
  double peer_cpu_pct = 0;
};

struct BenchResult {
  BenchConfig config;
  // Whole run: submitted = valid + invalid + rejected + in_flight.
  std::uint64_t submitted = 0;
  std::uint64_t valid = 0;
  std::uint64_t invalid = 0;
  std::uint64_t rejected = 0;  // never reached ordering
  std::uint64_t in_flight = 0;
  std::map<std::string, std::uint64_t> invalid_codes;
  // Measurement window [warmup, duration).
  std::uint64_t window_valid = 0;
  double window_s = 0;
  double throughput_tps = 0;
  LatencySummary latency;
  std::vector<ResourceSample> samples;
  double avg_cpu_pct = 0;
  double avg_orderer_cpu_pct = 0;
  double avg_peer_cpu_pct = 0;
  std::int64_t max_rss_bytes = 0;

  bool conserved() const { return submitted == valid + invalid + rejected + in_flight; }
  nlohmann::json to_json() const;
  static BenchResult from_json(const nlohmann::json& j);
};

BenchResult run_bench(const BenchConfig& config);

/// Reads a sweep file (.toml or .json): optional defaults plus a list of
/// runs. Throws Error(invalid_argument) or Error(io_error).
std::vector<BenchConfig> load_sweep(const std::filesystem::path& file);
std::vector<BenchConfig> parse_sweep_toml(std::string_view text);
std::vector<BenchConfig> parse_sweep_json(const nlohmann::json& j);

std::vector<BenchResult> sweep(const std::vector<BenchConfig>& configs,
                               const std::function<void(const BenchResult&)>& on_result = {});

const std::vector<std::string>& csv_columns();
std::string csv_row(const BenchResult& r);
std::string to_csv(const std::vector<BenchResult>& results);
nlohmann::json to_json(const std::vector<BenchResult>& results);
/// Accepts one result object or an array of them.
std::vector<BenchResult> results_from_json(const nlohmann::json& j);

/// Three SVG plots per result (latency histogram, CPU, memory) and a
/// summary.txt. Returns the files written.
std::vector<std::filesystem::path> write_report(const std::vector<BenchResult>& results,
                                                const std::filesystem::path& out_dir);
std::string summary_text(const std::vector<BenchResult>& results);

enum class Metric { throughput, p50 };
Metric parse_metric(std::string_view s);
double metric_value(const BenchResult& r, Metric m);

/// Checks that `metric` is strictly decreasing along `labels` and that
/// first / last >= min_ratio. Returns the violations; empty when it holds.
std::vector<std::string> check_order(const std::vector<BenchResult>& results, Metric metric,
                                     const std::vector<std::string>& labels, double min_ratio = 1.0);

}  // namespace fleetledger::bench
