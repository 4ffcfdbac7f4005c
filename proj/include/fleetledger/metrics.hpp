#pragma once

#include <atomic>
#include <cstdint>

namespace fleetledger {

/// Thread CPU time spent inside a component's handlers.
class CpuMeter {
 public:
  class Scope {
   public:
    explicit Scope(CpuMeter& meter);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    CpuMeter& meter_;
    std::int64_t start_;
  };

  std::int64_t total_ns() const { return total_ns_.load(std::memory_order_relaxed); }

 private:
  std::atomic<std::int64_t> total_ns_{0};
};

std::int64_t thread_cpu_ns();

struct ProcessSample {
  std::int64_t cpu_ns = 0;  // user + system
  std::int64_t rss_bytes = 0;
};

/// Reads /proc/self; zeros where unavailable.
ProcessSample sample_process();

}  // namespace fleetledger
