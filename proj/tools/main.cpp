#include <spdlog/spdlog.h>

#include <atomic>
#include <chrono>
#include <csignal>
#include <iostream>
#include <thread>

#include "cli.hpp"
#include "fleetledger/error.hpp"

namespace fleetcli {

namespace {
std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }
}  // namespace

Endpoint parse_endpoint(const std::string& text) {
  Endpoint ep;
  std::string port = text;
  if (auto colon = text.rfind(':'); colon != std::string::npos) {
    if (colon > 0) ep.host = text.substr(0, colon);
    port = text.substr(colon + 1);
  }
  try {
    std::size_t used = 0;
    const auto v = std::stoul(port, &used);
    if (used != port.size() || v > 65535) throw std::out_of_range(port);
    ep.port = static_cast<std::uint16_t>(v);
  } catch (const std::exception&) {
    throw CLI::ValidationError("endpoint", "expected host:port, got '" + text + "'");
  }
  return ep;
}

void install_signal_handlers() {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
}

bool stop_requested() { return g_stop.load(); }

void wait_for_stop(std::optional<double> seconds) {
  const auto end = std::chrono::steady_clock::now() +
                   std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                       std::chrono::duration<double>(seconds.value_or(0)));
  while (!g_stop) {
    if (seconds && std::chrono::steady_clock::now() >= end) return;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

}  // namespace fleetcli

int main(int argc, char** argv) {
  CLI::App app{"fleetledger: a permissioned ledger for a robot fleet"};
  app.require_subcommand(1);
  std::string level = "info";
  app.add_option("--log-level", level, "trace, debug, info, warn, error or off")->capture_default_str();
  app.parse_complete_callback([&] { spdlog::set_level(spdlog::level::from_str(level)); });

  fleetcli::add_net_commands(app);
  fleetcli::add_bench_commands(app);
  fleetcli::add_sim_commands(app);
  fleetcli::add_demo_command(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const fleetledger::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
