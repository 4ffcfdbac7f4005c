#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fleetledger/executor.hpp"
#include "fleetledger/identity.hpp"
#include "fleetledger/ledger.hpp"
#include "fleetledger/metrics.hpp"

namespace fleetledger {

struct OrdererConfig {
  Duration batch_timeout = std::chrono::seconds(2);
  std::uint32_t max_message_count = 10;
  std::uint64_t max_batch_bytes = 0;  // 0: no byte cap

  /// Throws Error(invalid_argument) unless timeout > 0 and count >= 1.
  void validate() const;
  void encode(Encoder& e) const;
  static OrdererConfig decode(Decoder& d);
  bool operator==(const OrdererConfig&) const = default;
};

struct Batch {
  std::vector<Transaction> txs;
  CutReason reason = CutReason::timeout;
  Timestamp cut_time{};
};

/// Block-cutting policy with time passed in explicitly. The timeout clock
/// starts when the queue goes from empty to non-empty.
class BlockCutter {
 public:
  explicit BlockCutter(OrdererConfig config);

  /// Queues `tx`; returns a batch when it fills to max_message_count or
  /// pushes the pending bytes past max_batch_bytes.
  std::optional<Batch> enqueue(Transaction tx, Timestamp now);
  /// Burst arrival at one instant: queues every tx, then cuts full batches
  /// while at least max_message_count are pending.
  std::vector<Batch> enqueue_burst(std::vector<Transaction> txs, Timestamp now);
  /// Takes min(pending, max_message_count) txs in FIFO order. Leftovers
  /// restart the timeout clock at `now`. Empty queue: nullopt.
  std::optional<Batch> cut(Timestamp now, CutReason reason);
  /// Cuts by timeout if the deadline is at or before `now`.
  std::optional<Batch> expire(Timestamp now);

  std::optional<Timestamp> deadline() const;
  std::optional<Timestamp> first_arrival() const { return first_arrival_; }
  std::size_t pending() const { return queue_.size(); }
  std::uint64_t pending_bytes() const { return pending_bytes_; }
  const OrdererConfig& config() const { return config_; }

 private:
  struct Entry {
    Transaction tx;
    std::uint64_t bytes;
  };

  OrdererConfig config_;
  std::deque<Entry> queue_;
  std::uint64_t pending_bytes_ = 0;
  std::optional<Timestamp> first_arrival_;
};

/// Builds the next block in a chain from a batch.
Block assemble_block(const Block* previous, Batch batch);

/// Genesis block carrying an opaque channel configuration.
Block make_genesis_block(const std::string& channel, const Bytes& config, const Identity& orderer, Timestamp now);

enum class SubmitStatus { accepted, not_a_member, unknown_channel, stopped };

std::string_view to_string(SubmitStatus s);

/// Solo ordering service. Confined to its executor.
class Orderer {
 public:
  using BlockSink = std::function<void(const Block&)>;
  using SubscriptionId = std::uint64_t;

  Orderer(Executor& executor, Identity identity);
  ~Orderer();
  Orderer(const Orderer&) = delete;
  Orderer& operator=(const Orderer&) = delete;

  /// Throws Error(duplicate_channel).
  void create_channel(const std::string& name, OrdererConfig config, TrustedRoots member_roots, Block genesis);
  bool has_channel(std::string_view name) const;

  SubmitStatus submit(Transaction tx);

  /// Streams blocks from `from_block` in order, then the live tail. Sinks
  /// run as separate executor tasks.
  SubscriptionId deliver(const std::string& channel, std::uint64_t from_block, BlockSink sink);
  void cancel_delivery(SubscriptionId id);

  const std::deque<Block>& blocks(const std::string& channel) const;
  std::uint64_t height(const std::string& channel) const { return blocks(channel).size(); }
  const BlockCutter& cutter(const std::string& channel) const;
  const Identity& identity() const { return identity_; }

  /// Stops accepting transactions and cancels timers.
  void stop();

  CpuMeter& cpu() { return cpu_; }
  Executor& executor() { return executor_; }

 private:
  struct ChannelState {
    std::string name;
    TrustedRoots member_roots;
    BlockCutter cutter;
    std::deque<Block> blocks;  // stable references while sinks run
    std::optional<Executor::TimerId> timer;
  };
  struct Subscription {
    std::string channel;
    std::uint64_t next = 0;
    BlockSink sink;
    bool pump_scheduled = false;
  };

  ChannelState& channel(const std::string& name);
  const ChannelState& channel(const std::string& name) const;
  void emit(ChannelState& ch, Batch batch);
  void arm_timer(ChannelState& ch);
  void on_timer(const std::string& name);
  void schedule_pump(SubscriptionId id);
  void pump(SubscriptionId id);

  Executor& executor_;
  Identity identity_;
  std::map<std::string, ChannelState, std::less<>> channels_;
  std::map<SubscriptionId, Subscription> subscriptions_;
  SubscriptionId next_subscription_ = 1;
  bool stopped_ = false;
  CpuMeter cpu_;
  std::shared_ptr<bool> alive_ = std::make_shared<bool>(true);
};

}  // namespace fleetledger
