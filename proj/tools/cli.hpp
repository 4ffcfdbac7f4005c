#pragma once

#include <CLI11.hpp>

#include <cstdint>
#include <optional>
#include <string>

namespace fleetcli {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  std::string str() const { return host + ":" + std::to_string(port); }
};

/// "host:port", ":port" or "port". Throws CLI::ValidationError.
Endpoint parse_endpoint(const std::string& text);

/// Installs SIGINT/SIGTERM handlers that set a stop flag.
void install_signal_handlers();
bool stop_requested();
/// Sleeps until a signal arrives or `seconds` elapse (forever when unset).
void wait_for_stop(std::optional<double> seconds);

void add_net_commands(CLI::App& app);
void add_bench_commands(CLI::App& app);
void add_sim_commands(CLI::App& app);
void add_demo_command(CLI::App& app);

}  // namespace fleetcli
