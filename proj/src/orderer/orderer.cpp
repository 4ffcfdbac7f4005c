#include "fleetledger/orderer.hpp"

#include "fleetledger/crypto.hpp"
#include "fleetledger/error.hpp"

namespace fleetledger {

void OrdererConfig::validate() const {
  if (batch_timeout <= Duration::zero()) throw Error(ErrorCode::invalid_argument, "batch_timeout must be > 0");
  if (max_message_count < 1) throw Error(ErrorCode::invalid_argument, "max_message_count must be >= 1");
}

void OrdererConfig::encode(Encoder& e) const {
  e.i64(batch_timeout.count()).u64(max_message_count).u64(max_batch_bytes);
}

OrdererConfig OrdererConfig::decode(Decoder& d) {
  OrdererConfig c;
  c.batch_timeout = Duration(d.i64());
  const auto count = d.u64();
  if (count > UINT32_MAX) throw Error(ErrorCode::decode_error, "max_message_count out of range");
  c.max_message_count = static_cast<std::uint32_t>(count);
  c.max_batch_bytes = d.u64();
  return c;
}

BlockCutter::BlockCutter(OrdererConfig config) : config_(config) { config_.validate(); }

std::optional<Timestamp> BlockCutter::deadline() const {
  if (!first_arrival_) return std::nullopt;
  return *first_arrival_ + config_.batch_timeout;
}

std::optional<Batch> BlockCutter::enqueue(Transaction tx, Timestamp now) {
  const auto bytes = static_cast<std::uint64_t>(tx.serialize().size());
  if (queue_.empty()) first_arrival_ = now;
  queue_.push_back(Entry{std::move(tx), bytes});
  pending_bytes_ += bytes;
  if (queue_.size() >= config_.max_message_count) return cut(now, CutReason::max_messages);
  if (config_.max_batch_bytes > 0 && pending_bytes_ > config_.max_batch_bytes) {
    return cut(now, CutReason::max_bytes);
  }
  return std::nullopt;
}

std::vector<Batch> BlockCutter::enqueue_burst(std::vector<Transaction> txs, Timestamp now) {
  if (queue_.empty() && !txs.empty()) first_arrival_ = now;
  for (auto& tx : txs) {
    const auto bytes = static_cast<std::uint64_t>(tx.serialize().size());
    queue_.push_back(Entry{std::move(tx), bytes});
    pending_bytes_ += bytes;
  }
  std::vector<Batch> out;
  while (queue_.size() >= config_.max_message_count) out.push_back(*cut(now, CutReason::max_messages));
  return out;
}

std::optional<Batch> BlockCutter::cut(Timestamp now, CutReason reason) {
  if (queue_.empty()) return std::nullopt;
  Batch batch;
  batch.reason = reason;
  batch.cut_time = now;
  const auto n = std::min<std::size_t>(queue_.size(), config_.max_message_count);
  batch.txs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    pending_bytes_ -= queue_.front().bytes;
    batch.txs.push_back(std::move(queue_.front().tx));
    queue_.pop_front();
  }
  if (queue_.empty()) {
    first_arrival_.reset();
  } else {
    first_arrival_ = now;
  }
  return batch;
}

std::optional<Batch> BlockCutter::expire(Timestamp now) {
  const auto due = deadline();
  if (!due || *due > now) return std::nullopt;
  return cut(now, CutReason::timeout);
}

Block assemble_block(const Block* previous, Batch batch) {
  Block block;
  block.header.number = previous ? previous->header.number + 1 : 0;
  block.header.prev_hash = previous ? previous->header.hash() : Hash{};
  block.header.data_hash = Block::compute_data_hash(batch.txs);
  block.transactions = std::move(batch.txs);
  block.cut_reason = batch.reason;
  block.cut_time = batch.cut_time;
  return block;
}

Block make_genesis_block(const std::string& channel, const Bytes& config, const Identity& orderer, Timestamp now) {
  Transaction tx;
  tx.channel = channel;
  tx.chaincode = std::string(kConfigChaincode);
  tx.function = "genesis";
  tx.args = {channel, std::string(config.begin(), config.end())};
  tx.creator = orderer.certificate();
  tx.nonce = Bytes(16, 0);
  tx.submit_time = now;
  tx.tx_id = tx.compute_id();
  tx.client_signature = orderer.sign(tx.signed_body());
  Batch batch{{std::move(tx)}, CutReason::genesis, now};
  return assemble_block(nullptr, std::move(batch));
}

std::string_view to_string(SubmitStatus s) {
  switch (s) {
    case SubmitStatus::accepted: return "accepted";
    case SubmitStatus::not_a_member: return "NOT_A_MEMBER";
    case SubmitStatus::unknown_channel: return "unknown-channel";
    case SubmitStatus::stopped: return "stopped";
  }
  return "unknown";
}

Orderer::Orderer(Executor& executor, Identity identity) : executor_(executor), identity_(std::move(identity)) {}

Orderer::~Orderer() {
  *alive_ = false;
  for (auto& [name, ch] : channels_) {
    if (ch.timer) executor_.cancel(*ch.timer);
  }
}

void Orderer::stop() {
  stopped_ = true;
  for (auto& [name, ch] : channels_) {
    if (ch.timer) executor_.cancel(*ch.timer);
    ch.timer.reset();
  }
}

void Orderer::create_channel(const std::string& name, OrdererConfig config, TrustedRoots member_roots, Block genesis) {
  if (channels_.count(name)) throw Error(ErrorCode::duplicate_channel, name);
  if (genesis.header.number != 0 || genesis.header.prev_hash != Hash{}) {
    throw Error(ErrorCode::invalid_argument, "genesis block must be number 0 with zero prev_hash");
  }
  ChannelState ch{name, std::move(member_roots), BlockCutter(config), {}, std::nullopt};
  ch.blocks.push_back(std::move(genesis));
  channels_.emplace(name, std::move(ch));
}

bool Orderer::has_channel(std::string_view name) const { return channels_.find(name) != channels_.end(); }

Orderer::ChannelState& Orderer::channel(const std::string& name) {
  auto it = channels_.find(name);
  if (it == channels_.end()) throw Error(ErrorCode::unknown_channel, name);
  return it->second;
}

const Orderer::ChannelState& Orderer::channel(const std::string& name) const {
  auto it = channels_.find(name);
  if (it == channels_.end()) throw Error(ErrorCode::unknown_channel, name);
  return it->second;
}

const std::deque<Block>& Orderer::blocks(const std::string& name) const { return channel(name).blocks; }

const BlockCutter& Orderer::cutter(const std::string& name) const { return channel(name).cutter; }

SubmitStatus Orderer::submit(Transaction tx) {
  CpuMeter::Scope scope(cpu_);
  if (stopped_) return SubmitStatus::stopped;
  auto it = channels_.find(tx.channel);
  if (it == channels_.end()) return SubmitStatus::unknown_channel;
  auto& ch = it->second;
  if (!verify_identity(tx.creator, ch.member_roots)) return SubmitStatus::not_a_member;

  const auto now = executor_.now();
  if (auto expired = ch.cutter.expire(now)) emit(ch, std::move(*expired));
  if (auto batch = ch.cutter.enqueue(std::move(tx), now)) emit(ch, std::move(*batch));
  arm_timer(ch);
  return SubmitStatus::accepted;
}

void Orderer::arm_timer(ChannelState& ch) {
  const auto due = ch.cutter.deadline();
  if (!due) {
    if (ch.timer) executor_.cancel(*ch.timer);
    ch.timer.reset();
    return;
  }
  if (ch.timer) return;  // already armed for the current first arrival
  ch.timer = executor_.schedule_at(*due, [this, name = ch.name, alive = alive_] {
    if (*alive) on_timer(name);
  });
}

void Orderer::on_timer(const std::string& name) {
  CpuMeter::Scope scope(cpu_);
  auto& ch = channel(name);
  ch.timer.reset();
  if (stopped_) return;
  if (auto batch = ch.cutter.expire(executor_.now())) emit(ch, std::move(*batch));
  arm_timer(ch);
}

void Orderer::emit(ChannelState& ch, Batch batch) {
  // Any cut invalidates the armed timer: either the queue is empty or the
  // leftovers restarted the clock.
  if (ch.timer) executor_.cancel(*ch.timer);
  ch.timer.reset();
  ch.blocks.push_back(assemble_block(&ch.blocks.back(), std::move(batch)));
  for (auto& [id, sub] : subscriptions_) {
    if (sub.channel == ch.name) schedule_pump(id);
  }
}

Orderer::SubscriptionId Orderer::deliver(const std::string& channel_name, std::uint64_t from_block, BlockSink sink) {
  channel(channel_name);
  const auto id = next_subscription_++;
  subscriptions_.emplace(id, Subscription{channel_name, from_block, std::move(sink), false});
  schedule_pump(id);
  return id;
}

void Orderer::cancel_delivery(SubscriptionId id) { subscriptions_.erase(id); }

void Orderer::schedule_pump(SubscriptionId id) {
  auto it = subscriptions_.find(id);
  if (it == subscriptions_.end() || it->second.pump_scheduled) return;
  it->second.pump_scheduled = true;
  executor_.post([this, id, alive = alive_] {
    if (*alive) pump(id);
  });
}

void Orderer::pump(SubscriptionId id) {
  auto it = subscriptions_.find(id);
  if (it == subscriptions_.end()) return;
  it->second.pump_scheduled = false;
  const auto& blocks = channel(it->second.channel).blocks;
  while (true) {
    it = subscriptions_.find(id);
    if (it == subscriptions_.end() || it->second.next >= blocks.size()) return;
    const auto& block = blocks[it->second.next++];
    auto sink = it->second.sink;  // the sink may cancel its own subscription
    sink(block);
  }
}

}  // namespace fleetledger
