#pragma once

// Every ledger component is confined to one Executor. The logical executor
// runs a deterministic discrete-event queue; the realtime executor runs the
// same tasks on a dedicated thread against the steady clock.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <thread>
#include <type_traits>
#include <utility>

namespace fleetledger {

/// Nanoseconds since the owning clock's epoch.
using Timestamp = std::chrono::nanoseconds;
using Duration = std::chrono::nanoseconds;

Duration seconds_to_duration(double seconds);
inline double to_seconds(Duration d) { return static_cast<double>(d.count()) * 1e-9; }

class Clock {
 public:
  virtual ~Clock() = default;
  virtual Timestamp now() const = 0;
};

class Executor : public Clock {
 public:
  using Task = std::function<void()>;
  using TimerId = std::uint64_t;

  virtual void post(Task task) = 0;
  virtual TimerId schedule_at(Timestamp when, Task task) = 0;
  TimerId schedule_after(Duration delay, Task task) {
    return schedule_at(now() + delay, std::move(task));
  }
  /// Returns false if the timer already fired or was never scheduled.
  virtual bool cancel(TimerId id) = 0;
  virtual bool in_executor_thread() const = 0;

  /// Runs `fn` on the executor and waits for its result. Calls inline when
  /// already on the executor.
  template <class F>
  auto run_sync(F&& fn) -> std::invoke_result_t<F> {
    using R = std::invoke_result_t<F>;
    if (in_executor_thread()) return fn();
    std::packaged_task<R()> task(std::forward<F>(fn));
    auto fut = task.get_future();
    auto shared = std::make_shared<std::packaged_task<R()>>(std::move(task));
    post([shared] { (*shared)(); });
    return fut.get();
  }
};

/// Single-threaded discrete-event executor. Tasks at equal times run in
/// scheduling order.
class LogicalExecutor final : public Executor {
 public:
  explicit LogicalExecutor(Timestamp start = Timestamp{0}) : now_(start) {}

  Timestamp now() const override { return now_; }
  void post(Task task) override { schedule_at(now_, std::move(task)); }
  TimerId schedule_at(Timestamp when, Task task) override;
  bool cancel(TimerId id) override;
  bool in_executor_thread() const override { return true; }

  /// Runs one task; false when the queue is empty.
  bool step();
  /// Runs every task scheduled at or before `until`, then sets now = until.
  void run_until(Timestamp until);
  /// Runs until the queue drains or `limit` tasks ran. Returns tasks run.
  std::size_t run_until_idle(std::size_t limit = SIZE_MAX);
  std::size_t pending() const { return queue_.size(); }

 private:
  using Key = std::pair<Timestamp, std::uint64_t>;
  Timestamp now_;
  std::uint64_t next_id_ = 1;
  std::map<Key, Task> queue_;
  std::map<TimerId, Key> timers_;
};

/// Runs tasks on its own thread. now() is steady_clock time since construction.
class RealtimeExecutor final : public Executor {
 public:
  RealtimeExecutor();
  ~RealtimeExecutor() override;
  RealtimeExecutor(const RealtimeExecutor&) = delete;
  RealtimeExecutor& operator=(const RealtimeExecutor&) = delete;

  Timestamp now() const override;
  void post(Task task) override;
  TimerId schedule_at(Timestamp when, Task task) override;
  bool cancel(TimerId id) override;
  bool in_executor_thread() const override;

  /// Drains nothing; pending tasks are dropped. Idempotent.
  void stop();

 private:
  void loop();

  using Key = std::pair<Timestamp, std::uint64_t>;
  const std::chrono::steady_clock::time_point epoch_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<Key, Task> queue_;
  std::map<TimerId, Key> timers_;
  std::uint64_t next_id_ = 1;
  bool stopping_ = false;
  std::thread thread_;
};

}  // namespace fleetledger
