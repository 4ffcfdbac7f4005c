#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "fleetledger/bench.hpp"
#include "fleetledger/error.hpp"

namespace fleetledger::bench {

namespace {

constexpr double kWidth = 640, kHeight = 360;
constexpr double kLeft = 64, kRight = 16, kTop = 36, kBottom = 48;
constexpr const char* kCpuColor = "#1f5fbf";
constexpr const char* kMemColor = "#d6589f";
constexpr const char* kBarColor = "#4a4a4a";

std::string num(double v, int decimals = 2) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(decimals);
  os << v;
  return os.str();
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

/// Minimal plot frame: title, axis labels, y ticks.
class Svg {
 public:
  Svg(const std::string& title, const std::string& x_label, const std::string& y_label, double y_max)
      : y_max_(y_max > 0 ? y_max : 1) {
    os_ << R"(<svg xmlns="http://www.w3.org/2000/svg" width=")" << kWidth << R"(" height=")" << kHeight
        << R"(" font-family="sans-serif" font-size="11">)" << '\n';
    os_ << R"(<rect width="100%" height="100%" fill="white"/>)" << '\n';
    os_ << R"(<text x=")" << kWidth / 2 << R"(" y="20" text-anchor="middle" font-size="14">)" << escape(title)
        << "</text>\n";
    os_ << R"(<text x=")" << kLeft + plot_w() / 2 << R"(" y=")" << kHeight - 10 << R"(" text-anchor="middle">)"
        << escape(x_label) << "</text>\n";
    os_ << R"(<text x="14" y=")" << kTop + plot_h() / 2 << R"(" text-anchor="middle" transform="rotate(-90 14 )"
        << kTop + plot_h() / 2 << R"lit()">)lit" << escape(y_label) << "</text>\n";
    os_ << R"(<line x1=")" << kLeft << R"(" y1=")" << kTop + plot_h() << R"(" x2=")" << kLeft + plot_w()
        << R"(" y2=")" << kTop + plot_h() << R"(" stroke="black"/>)" << '\n';
    os_ << R"(<line x1=")" << kLeft << R"(" y1=")" << kTop << R"(" x2=")" << kLeft << R"(" y2=")"
        << kTop + plot_h() << R"(" stroke="black"/>)" << '\n';
    for (int i = 0; i <= 4; ++i) {
      const double v = y_max_ * i / 4.0;
      const double y = py(v);
      os_ << R"(<line x1=")" << kLeft - 4 << R"(" y1=")" << y << R"(" x2=")" << kLeft << R"(" y2=")" << y
          << R"(" stroke="black"/>)";
      os_ << R"(<text x=")" << kLeft - 6 << R"(" y=")" << y + 4 << R"(" text-anchor="end">)"
          << num(v, v < 10 ? 2 : 0) << "</text>\n";
    }
  }

  static double plot_w() { return kWidth - kLeft - kRight; }
  static double plot_h() { return kHeight - kTop - kBottom; }
  double py(double v) const { return kTop + plot_h() * (1.0 - std::clamp(v / y_max_, 0.0, 1.0)); }

  void polyline(const std::vector<std::pair<double, double>>& pts, double x_max, const char* color) {
    if (pts.empty()) return;
    os_ << R"(<polyline fill="none" stroke=")" << color << R"(" stroke-width="1.5" points=")";
    for (const auto& [x, y] : pts) os_ << num(kLeft + plot_w() * x / (x_max > 0 ? x_max : 1)) << ',' << num(py(y)) << ' ';
    os_ << "\"/>\n";
  }

  void bar(double x, double w, double v, const char* color) {
    const double top = py(v);
    os_ << R"(<rect x=")" << num(x) << R"(" y=")" << num(top) << R"(" width=")" << num(w) << R"(" height=")"
        << num(kTop + plot_h() - top) << R"(" fill=")" << color << R"("/>)" << '\n';
  }

  void x_tick(double x, const std::string& label) {
    os_ << R"(<text x=")" << num(x) << R"(" y=")" << kTop + plot_h() + 14 << R"(" text-anchor="middle">)"
        << escape(label) << "</text>\n";
  }

  void legend(int row, const char* color, const std::string& label) {
    const double y = kTop + 8 + 14 * row;
    os_ << R"(<rect x=")" << kLeft + plot_w() - 150 << R"(" y=")" << y - 8 << R"(" width="10" height="10" fill=")"
        << color << R"("/>)";
    os_ << R"(<text x=")" << kLeft + plot_w() - 135 << R"(" y=")" << y + 1 << R"(">)" << escape(label)
        << "</text>\n";
  }

  void note(const std::string& text) {
    os_ << R"(<text x=")" << kLeft + plot_w() / 2 << R"(" y=")" << kTop + plot_h() / 2
        << R"(" text-anchor="middle" fill="#888">)" << escape(text) << "</text>\n";
  }

  std::string finish() {
    os_ << "</svg>\n";
    return os_.str();
  }

 private:
  double y_max_;
  std::ostringstream os_;
};

std::string bucket_label(std::int64_t upper_ns) {
  if (upper_ns == std::numeric_limits<std::int64_t>::max()) return "inf";
  const double ms = static_cast<double>(upper_ns) / 1e6;
  if (ms < 1) return num(ms * 1000, 0) + "us";
  if (ms < 1000) return num(ms, 0) + "ms";
  return num(ms / 1000, 0) + "s";
}

std::string latency_svg(const BenchResult& r) {
  const auto& h = r.latency.histogram;
  std::uint64_t peak = 0;
  for (const auto& b : h) peak = std::max(peak, b.count);
  Svg svg("Commit latency " + r.config.display_label() + " (p50 " + num(static_cast<double>(r.latency.p50_ns) / 1e6, 1) +
              " ms)",
          "latency bucket (upper bound)", "transactions", static_cast<double>(peak));
  const double slot = Svg::plot_w() / static_cast<double>(std::max<std::size_t>(h.size(), 1));
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double x = kLeft + slot * static_cast<double>(i);
    svg.bar(x + 1, slot - 2, static_cast<double>(h[i].count), kBarColor);
    if (i % 2 == 0) svg.x_tick(x + slot / 2, bucket_label(h[i].upper_ns));
  }
  if (r.latency.count == 0) svg.note("no committed transactions in the window");
  return svg.finish();
}

std::string cpu_svg(const BenchResult& r) {
  double peak = 100;
  double t_max = 1;
  for (const auto& s : r.samples) {
    peak = std::max({peak, s.cpu_pct, s.orderer_cpu_pct, s.peer_cpu_pct});
    t_max = std::max(t_max, s.t_s);
  }
  Svg svg("CPU usage " + r.config.display_label(), "time (s)", "CPU (%)", peak);
  std::vector<std::pair<double, double>> proc, ord, peer;
  for (const auto& s : r.samples) {
    proc.emplace_back(s.t_s, s.cpu_pct);
    ord.emplace_back(s.t_s, s.orderer_cpu_pct);
    peer.emplace_back(s.t_s, s.peer_cpu_pct);
  }
  svg.polyline(proc, t_max, kCpuColor);
  svg.polyline(ord, t_max, "#7fa6e0");
  svg.polyline(peer, t_max, "#0b2f66");
  svg.legend(0, kCpuColor, "process");
  svg.legend(1, "#7fa6e0", "orderer");
  svg.legend(2, "#0b2f66", "peers");
  svg.x_tick(kLeft, "0");
  svg.x_tick(kLeft + Svg::plot_w(), num(t_max, 0));
  if (r.samples.empty()) svg.note("no samples (logical clock)");
  return svg.finish();
}

std::string memory_svg(const BenchResult& r) {
  double peak = 1;
  double t_max = 1;
  for (const auto& s : r.samples) {
    peak = std::max(peak, static_cast<double>(s.rss_bytes) / (1024.0 * 1024.0));
    t_max = std::max(t_max, s.t_s);
  }
  Svg svg("Memory usage " + r.config.display_label(), "time (s)", "RSS (MiB)", peak * 1.1);
  std::vector<std::pair<double, double>> pts;
  for (const auto& s : r.samples) pts.emplace_back(s.t_s, static_cast<double>(s.rss_bytes) / (1024.0 * 1024.0));
  svg.polyline(pts, t_max, kMemColor);
  svg.legend(0, kMemColor, "resident set");
  svg.x_tick(kLeft, "0");
  svg.x_tick(kLeft + Svg::plot_w(), num(t_max, 0));
  if (r.samples.empty()) svg.note("no samples (logical clock)");
  return svg.finish();
}

std::string file_stem(const std::string& label) {
  std::string out;
  for (char c : label) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_';
  return out.empty() ? "run" : out;
}

void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + p.string());
  out << content;
}

}  // namespace

std::string summary_text(const std::vector<BenchResult>& results) {
  std::ostringstream os;
  os << results.size() << " result(s)\n";
  for (const auto& r : results) {
    const auto& c = r.config;
    os << c.display_label() << ": BT=" << c.batch_timeout_s << " s, M=" << c.max_message_count << ", "
       << to_string(c.mode);
    if (c.mode == ClientMode::open_loop) os << " @ " << c.rate_hz << " Hz";
    os << ", " << c.num_clients << " client(s), " << to_string(c.clock) << " clock\n";
    os << "  throughput " << num(r.throughput_tps, 2) << " tx/s over " << num(r.window_s, 1) << " s ("
       << r.window_valid << " valid)\n";
    os << "  latency p50 " << num(static_cast<double>(r.latency.p50_ns) / 1e6, 3) << " ms, p90 "
       << num(static_cast<double>(r.latency.p90_ns) / 1e6, 3) << " ms, p99 "
       << num(static_cast<double>(r.latency.p99_ns) / 1e6, 3) << " ms, min "
       << num(static_cast<double>(r.latency.min_ns) / 1e6, 3) << " ms, max "
       << num(static_cast<double>(r.latency.max_ns) / 1e6, 3) << " ms\n";
    os << "  submitted " << r.submitted << " = valid " << r.valid << " + invalid " << r.invalid << " + rejected "
       << r.rejected << " + in flight " << r.in_flight << (r.conserved() ? "" : "  [NOT CONSERVED]") << '\n';
    if (!r.samples.empty()) {
      os << "  cpu avg " << num(r.avg_cpu_pct, 1) << " % (orderer " << num(r.avg_orderer_cpu_pct, 1)
         << " %, peers " << num(r.avg_peer_cpu_pct, 1) << " %), max rss "
         << num(static_cast<double>(r.max_rss_bytes) / (1024.0 * 1024.0), 1) << " MiB\n";
    }
  }
  return os.str();
}

std::vector<std::filesystem::path> write_report(const std::vector<BenchResult>& results,
                                                const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  std::map<std::string, int> seen;
  for (const auto& r : results) {
    auto stem = file_stem(r.config.display_label());
    if (const int n = seen[stem]++; n > 0) stem += "_" + std::to_string(n);
    for (const auto& [kind, svg] : {std::pair{"latency", latency_svg(r)}, std::pair{"cpu", cpu_svg(r)},
                                    std::pair{"memory", memory_svg(r)}}) {
      const auto p = out_dir / (stem + "_" + kind + ".svg");
      write_file(p, svg);
      written.push_back(p);
    }
  }
  const auto summary = out_dir / "summary.txt";
  write_file(summary, summary_text(results));
  written.push_back(summary);
  return written;
}

}  // namespace fleetledger::bench
