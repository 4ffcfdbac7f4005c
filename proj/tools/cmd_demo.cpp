#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>

#include "cli.hpp"
#include "fleet.hpp"
#include "fleetledger/error.hpp"

namespace fleetcli {

namespace {

void write_text(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + p.string());
  out << text;
}

/// Per-robot recorder counts and whether every peer holds the same state.
/// Runs on the network's executor.
bool report_mission(Network& net, recorder::MissionRunner& runner, const std::string& channel,
                    const std::optional<std::filesystem::path>& out) {
  for (const auto& r : runner.simulation().mission().robots) {
    const auto& poses = runner.pose_recorder(r.id).stats();
    const auto& dets = runner.detection_recorder(r.id).stats();
    std::cout << r.id << ": poses " << poses.durable << "/" << poses.recorded << " durable, objects "
              << dets.durable << " durable (" << dets.skipped_existing << " repeat detections skipped), commands "
              << runner.command_listener(r.id).completed().size() << " done\n";
  }
  const auto peers = net.channel_peers(channel);
  bool agree = true;
  std::optional<std::string> reference;
  for (auto* p : peers) {
    const auto dump = p->ledger(channel).state().dump();
    if (reference && dump != *reference) agree = false;
    if (!reference) reference = dump;
    if (out) write_text(*out / (p->id() + ".state.txt"), dump);
  }
  const auto height = peers.empty() ? 0 : peers.front()->ledger(channel).height();
  std::cout << channel << ": height " << height << ", " << peers.size() << " peer(s) "
            << (agree ? "agree" : "DISAGREE") << " on world state" << std::endl;
  if (out) write_text(*out / "trajectory.csv", runner.simulation().trajectory_csv());
  return agree;
}

void add_sim(CLI::App& app) {
  auto* sim_cmd = app.add_subcommand("sim", "simulator without a ledger")->require_subcommand(1);

  auto* defaults = sim_cmd->add_subcommand("defaults", "write the default world and mission as JSON");
  auto dir = std::make_shared<std::filesystem::path>("config");
  defaults->add_option("--out", *dir, "directory")->capture_default_str();
  defaults->callback([dir] {
    const auto world = sim::WorldModel::default_world();
    write_text(*dir / "world.json", sim::to_json(world).dump(2) + "\n");
    write_text(*dir / "mission.json", sim::to_json(sim::MissionSpec::default_mission(world)).dump(2) + "\n");
    std::cout << "wrote world.json and mission.json to " << dir->string() << std::endl;
  });

  auto* run = sim_cmd->add_subcommand("run", "run a mission on simulated time and print topic counts");
  auto files = std::make_shared<SceneFiles>();
  auto csv = std::make_shared<std::optional<std::filesystem::path>>();
  run->add_option("--world", files->world)->check(CLI::ExistingFile);
  run->add_option("--mission", files->mission)->check(CLI::ExistingFile);
  run->add_option("--trajectory", *csv, "write the ground-truth trajectory CSV here");
  run->callback([files, csv] {
    const auto scene = Scene::load(*files);
    sim::TopicBus bus;
    std::map<std::string, std::uint64_t> counts;
    bus.subscribe_all([&](const sim::Message& m) { ++counts[m.topic]; });
    sim::Simulation simulation(scene.world, scene.mission, bus);
    simulation.run_until(static_cast<std::int64_t>(scene.mission.duration_s * 1e9));
    for (const auto& [topic, n] : counts) std::cout << topic << ' ' << n << '\n';
    if (*csv) write_text(**csv, simulation.trajectory_csv());
  });
}

void add_demo(CLI::App& app) {
  auto* demo = app.add_subcommand("demo", "the inventory mission end to end in one process");
  struct Opts {
    SceneFiles files;
    bool logical = false;
    bool keep_serving = false;
    std::optional<double> mission_duration;
    double pose_freq = 0.2;
    std::optional<std::filesystem::path> out;
    std::optional<std::filesystem::path> wallet;
    std::string http = "127.0.0.1:8080";
    bool no_http = false;
    std::optional<std::string> gateway;
    std::optional<std::filesystem::path> ui_dir;
  };
  auto o = std::make_shared<Opts>();
  o->files.add_options(*demo);
  demo->add_flag("--logical", o->logical, "simulated time: finishes in seconds, serves nothing");
  demo->add_option("--mission-duration", o->mission_duration, "override the mission length, seconds");
  demo->add_option("--pose-freq", o->pose_freq, "pose records per second per robot")->capture_default_str();
  demo->add_option("--out", o->out, "directory for trajectory.csv and per-peer state dumps");
  demo->add_option("--wallet", o->wallet, "also write identities here");
  demo->add_option("--http", o->http, "HTTP API listen address")->capture_default_str();
  demo->add_flag("--no-http", o->no_http, "do not serve the HTTP API");
  demo->add_option("--listen", o->gateway, "also serve the gateway on this address");
  demo->add_option("--ui-dir", o->ui_dir)->check(CLI::ExistingDirectory);
  demo->add_flag("--keep-serving", o->keep_serving, "keep serving after the mission until Ctrl-C");
  demo->callback([o] {
    auto scene = Scene::load(o->files);
    if (o->mission_duration) scene.mission.duration_s = *o->mission_duration;
    recorder::MissionOptions mo;
    mo.pose_max_freq = o->pose_freq;
    bool agree = false;

    if (o->logical) {
      LogicalExecutor ex;
      auto net = Network::bring_up(ex, scene.spec);
      net->apply_channel_specs(contracts::standard_contracts(scene.labels));
      ex.run_until_idle();
      if (o->wallet) save_wallet(*net, *o->wallet);
      RobotClients clients(*net, scene.mission, mo.channel);
      recorder::MissionRunner runner(ex, scene.world, scene.mission,
                                     [&](const std::string& id) -> LedgerClient& { return clients(id); }, mo);
      runner.start();
      ex.run_until_idle();
      std::cout << "mission of " << scene.mission.duration_s << " s finished at t="
                << to_seconds(ex.now()) << " s\n";
      agree = report_mission(*net, runner, mo.channel, o->out);
    } else {
      install_signal_handlers();
      NodeOptions no;
      no.wallet = o->wallet;
      if (!o->no_http) no.http = parse_endpoint(o->http);
      if (o->gateway) no.gateway = parse_endpoint(*o->gateway);
      no.ui_dir = o->ui_dir;
      no.sim = true;
      no.mission = mo;
      FleetNode node(std::move(scene), no);
      if (auto p = node.http_port()) std::cout << "http api on port " << *p << std::endl;
      std::cout << "running a " << node.scene().mission.duration_s << " s mission" << std::endl;
      while (!stop_requested() && !node.mission_finished()) wait_for_stop(0.25);
      std::this_thread::sleep_for(std::chrono::seconds(3));
      agree = node.executor().run_sync(
          [&] { return report_mission(node.network(), *node.runner(), mo.channel, o->out); });
      if (o->keep_serving) {
        std::cout << "serving until Ctrl-C" << std::endl;
        wait_for_stop(std::nullopt);
      }
    }
    if (!agree) throw std::runtime_error("peers disagree on the world state");
  });
}

}  // namespace

void add_sim_commands(CLI::App& app) { add_sim(app); }

void add_demo_command(CLI::App& app) { add_demo(app); }

}  // namespace fleetcli
