#include "fleetledger/executor.hpp"

#include <cmath>

namespace fleetledger {

Duration seconds_to_duration(double seconds) {
  return Duration(static_cast<std::int64_t>(std::llround(seconds * 1e9)));
}

Executor::TimerId LogicalExecutor::schedule_at(Timestamp when, Task task) {
  if (when < now_) when = now_;
  const auto id = next_id_++;
  const Key key{when, id};
  queue_.emplace(key, std::move(task));
  timers_.emplace(id, key);
  return id;
}

bool LogicalExecutor::cancel(TimerId id) {
  auto it = timers_.find(id);
  if (it == timers_.end()) return false;
  queue_.erase(it->second);
  timers_.erase(it);
  return true;
}

bool LogicalExecutor::step() {
  if (queue_.empty()) return false;
  auto node = queue_.extract(queue_.begin());
  timers_.erase(node.key().second);
  now_ = node.key().first;
  node.mapped()();
  return true;
}

void LogicalExecutor::run_until(Timestamp until) {
  while (!queue_.empty() && queue_.begin()->first.first <= until) step();
  if (now_ < until) now_ = until;
}

std::size_t LogicalExecutor::run_until_idle(std::size_t limit) {
  std::size_t n = 0;
  while (n < limit && step()) ++n;
  return n;
}

RealtimeExecutor::RealtimeExecutor()
    : epoch_(std::chrono::steady_clock::now()), thread_([this] { loop(); }) {}

RealtimeExecutor::~RealtimeExecutor() { stop(); }

void RealtimeExecutor::stop() {
  {
    std::lock_guard lock(mu_);
    if (stopping_ && !thread_.joinable()) return;
    stopping_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable() && std::this_thread::get_id() != thread_.get_id()) thread_.join();
  std::lock_guard lock(mu_);
  queue_.clear();
  timers_.clear();
}

Timestamp RealtimeExecutor::now() const {
  return std::chrono::duration_cast<Timestamp>(std::chrono::steady_clock::now() - epoch_);
}

void RealtimeExecutor::post(Task task) { schedule_at(Timestamp::min(), std::move(task)); }

Executor::TimerId RealtimeExecutor::schedule_at(Timestamp when, Task task) {
  std::lock_guard lock(mu_);
  const auto id = next_id_++;
  if (stopping_) return id;
  const Key key{when, id};
  queue_.emplace(key, std::move(task));
  timers_.emplace(id, key);
  cv_.notify_all();
  return id;
}

bool RealtimeExecutor::cancel(TimerId id) {
  std::lock_guard lock(mu_);
  auto it = timers_.find(id);
  if (it == timers_.end()) return false;
  queue_.erase(it->second);
  timers_.erase(it);
  return true;
}

bool RealtimeExecutor::in_executor_thread() const {
  return std::this_thread::get_id() == thread_.get_id();
}

void RealtimeExecutor::loop() {
  std::unique_lock lock(mu_);
  while (!stopping_) {
    if (queue_.empty()) {
      cv_.wait(lock);
      continue;
    }
    const auto due = queue_.begin()->first.first;
    if (due > now()) {
      cv_.wait_until(lock, epoch_ + due);
      continue;
    }
    auto node = queue_.extract(queue_.begin());
    timers_.erase(node.key().second);
    lock.unlock();
    node.mapped()();
    lock.lock();
  }
}

}  // namespace fleetledger
