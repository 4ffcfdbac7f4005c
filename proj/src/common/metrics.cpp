#include "fleetledger/metrics.hpp"

#include <time.h>
#include <unistd.h>

#include <fstream>
#include <sstream>
#include <string>

namespace fleetledger {

std::int64_t thread_cpu_ns() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return static_cast<std::int64_t>(ts.tv_sec) * 1'000'000'000 + ts.tv_nsec;
}

CpuMeter::Scope::Scope(CpuMeter& meter) : meter_(meter), start_(thread_cpu_ns()) {}

CpuMeter::Scope::~Scope() { meter_.total_ns_.fetch_add(thread_cpu_ns() - start_, std::memory_order_relaxed); }

ProcessSample sample_process() {
  ProcessSample s;
  timespec ts{};
  if (clock_gettime(CLOCK_PROCESS_CPUTIME_ID, &ts) == 0) {
    s.cpu_ns = static_cast<std::int64_t>(ts.tv_sec) * 1'000'000'000 + ts.tv_nsec;
  }
  std::ifstream status("/proc/self/status");
  std::string line;
  while (std::getline(status, line)) {
    if (line.rfind("VmRSS:", 0) == 0) {
      std::istringstream in(line.substr(6));
      std::int64_t kb = 0;
      in >> kb;
      s.rss_bytes = kb * 1024;
      break;
    }
  }
  return s;
}

}  // namespace fleetledger
