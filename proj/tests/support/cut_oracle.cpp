#include "cut_oracle.hpp"

namespace oracle {

std::vector<Cut> simulate_cuts(const std::vector<Arrival>& arrivals, const Params& p) {
  std::vector<Cut> cuts;
  std::vector<std::uint64_t> queue;  // sizes of queued txs
  bool armed = false;
  std::int64_t deadline = 0;

  auto cut = [&](std::int64_t t, Reason r) {
    const std::size_t n = queue.size() < p.max_messages ? queue.size() : p.max_messages;
    cuts.push_back(Cut{n, t, r});
    queue.erase(queue.begin(), queue.begin() + static_cast<std::ptrdiff_t>(n));
    armed = !queue.empty();
    deadline = t + p.batch_timeout;
  };

  for (const auto& a : arrivals) {
    while (armed && deadline <= a.time) cut(deadline, Reason::timeout);
    if (queue.empty()) {
      armed = true;
      deadline = a.time + p.batch_timeout;
    }
    queue.push_back(a.bytes);
    std::uint64_t total = 0;
    for (auto b : queue) total += b;
    if (queue.size() == p.max_messages) {
      cut(a.time, Reason::max_messages);
    } else if (p.max_bytes > 0 && total > p.max_bytes) {
      cut(a.time, Reason::max_bytes);
    }
  }
  while (armed) cut(deadline, Reason::timeout);
  return cuts;
}

}  // namespace oracle
