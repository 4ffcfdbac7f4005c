#pragma once

// Low-frequency recorders that bridge simulator topics onto the ledger, the
// per-robot command listener, and the mission runner that wires both to a
// simulation driven by an executor.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fleetledger/client.hpp"
#include "fleetledger/executor.hpp"
#include "fleetledger/sim.hpp"

namespace fleetledger::recorder {

/// Admits a message when at least 1/max_freq has passed since the last
/// admitted one. The first message is always admitted.
class RateGate {
 public:
  /// Throws Error(invalid_argument) unless max_freq is finite and > 0.
  explicit RateGate(double max_freq);
  bool admit(std::int64_t stamp_ns);
  std::int64_t period_ns() const { return period_ns_; }
  std::optional<std::int64_t> last() const { return last_; }

 private:
  std::int64_t period_ns_;
  std::optional<std::int64_t> last_;
};

struct RecorderConfig {
  std::string data_topic;
  double max_freq = 1.0;
  std::string channel = "mychannel";
  std::string chaincode = "path";
  std::filesystem::path wallet;
  bool download_after_write = false;
  /// Count a record as durable only once its commit event says VALID.
  bool wait_for_commit = true;
  void validate() const;
};

struct RecorderStats {
  std::uint64_t received = 0;
  std::uint64_t recorded = 0;   // passed the gate and submitted
  std::uint64_t durable = 0;    // VALID commits (or acceptances without wait_for_commit)
  std::uint64_t invalid = 0;    // committed with a non-VALID code
  std::uint64_t failed = 0;     // never reached ordering
  std::uint64_t skipped_existing = 0;
  std::uint64_t downloads = 0;
  std::uint64_t last_download_size = 0;
  std::map<std::string, std::uint64_t> codes;
};

/// Shared submission bookkeeping for the recorders.
class RecorderBase {
 public:
  virtual ~RecorderBase();
  RecorderBase(const RecorderBase&) = delete;
  RecorderBase& operator=(const RecorderBase&) = delete;

  /// Feeds one message as if it arrived on the subscribed topic.
  virtual void on_message(const sim::Message& m) = 0;
  const RecorderStats& stats() const { return stats_; }
  /// Stamps of the messages that passed the gate, in order.
  const std::vector<std::int64_t>& recorded_stamps() const { return recorded_stamps_; }
  /// Subscribes on_message to `topic`.
  void attach(sim::TopicBus& bus, const std::string& topic);

 protected:
  RecorderBase(LedgerClient& client, std::string owner_org, bool wait_for_commit, bool download_after_write);
  void submit(Invocation inv, std::int64_t stamp, bool absorb_existing);

  LedgerClient& client_;
  std::string owner_org_;
  bool wait_for_commit_;
  bool download_after_write_;
  RecorderStats stats_;
  std::vector<std::int64_t> recorded_stamps_;

 private:
  sim::TopicBus* bus_ = nullptr;
  std::optional<sim::TopicBus::SubscriptionId> subscription_;
  std::shared_ptr<bool> alive_ = std::make_shared<bool>(true);
};

/// Rate-gated recorder: poses become path assets, detections object assets.
class Recorder final : public RecorderBase {
 public:
  Recorder(LedgerClient& client, RecorderConfig config);
  void on_message(const sim::Message& m) override;
  const RecorderConfig& config() const { return config_; }

 private:
  RecorderConfig config_;
  RateGate gate_;
  std::uint64_t next_seq_ = 0;
};

/// Ungated: one object asset per (label, robot, object); repeats that the
/// contract refuses as "already exists" are counted as skips.
class DetectionRecorder final : public RecorderBase {
 public:
  explicit DetectionRecorder(LedgerClient& client, bool wait_for_commit = true);
  void on_message(const sim::Message& m) override;
};

/// Polls a robot's pending commands and drives them through
/// executing -> done as the simulated robot traverses their waypoints.
class CommandListener {
 public:
  CommandListener(LedgerClient& client, sim::Simulation& sim, std::string robot_id, Duration poll_period);
  ~CommandListener();
  CommandListener(const CommandListener&) = delete;
  CommandListener& operator=(const CommandListener&) = delete;

  void start();
  void stop();
  /// Called by the runner when the robot reached a command's last waypoint.
  void command_done(const std::string& command_id);
  /// Runs one poll now.
  void poll();
  const std::vector<std::string>& started() const { return started_; }
  const std::vector<std::string>& completed() const { return completed_; }

 private:
  LedgerClient& client_;
  sim::Simulation& sim_;
  std::string robot_id_;
  Duration poll_period_;
  std::set<std::string> seen_;
  std::vector<std::string> started_;
  std::vector<std::string> completed_;
  std::optional<Executor::TimerId> timer_;
  bool running_ = false;
  bool poll_in_flight_ = false;
  std::shared_ptr<bool> alive_ = std::make_shared<bool>(true);
};

struct MissionOptions {
  double pose_max_freq = 0.2;
  bool record_poses = true;
  bool record_detections = true;
  bool listen_commands = true;
  Duration command_poll = std::chrono::seconds(1);
  std::string channel = "mychannel";
  bool download_after_write = false;
};

/// Runs a simulation on an executor, one tick per tick period starting at
/// the executor's current time, with one pose recorder, one detection
/// recorder and one command listener per robot.
class MissionRunner {
 public:
  using ClientFor = std::function<LedgerClient&(const std::string& robot_id)>;

  MissionRunner(Executor& executor, sim::WorldModel world, sim::MissionSpec mission, ClientFor client_for,
                MissionOptions options = {});
  ~MissionRunner();
  MissionRunner(const MissionRunner&) = delete;
  MissionRunner& operator=(const MissionRunner&) = delete;

  void start();
  void stop();
  bool finished() const { return sim_.finished(); }
  /// Fires once after the last tick.
  void on_finished(std::function<void()> fn) { on_finished_ = std::move(fn); }

  sim::Simulation& simulation() { return sim_; }
  sim::TopicBus& bus() { return bus_; }
  const Recorder& pose_recorder(const std::string& robot_id) const;
  const DetectionRecorder& detection_recorder(const std::string& robot_id) const;
  CommandListener& command_listener(const std::string& robot_id);
  /// Mission time of the simulation translated to executor time.
  Timestamp start_time() const { return start_; }

 private:
  void schedule_tick();

  Executor& executor_;
  sim::TopicBus bus_;
  sim::Simulation sim_;
  MissionOptions options_;
  std::map<std::string, std::unique_ptr<Recorder>> pose_recorders_;
  std::map<std::string, std::unique_ptr<DetectionRecorder>> detection_recorders_;
  std::map<std::string, std::unique_ptr<CommandListener>> listeners_;
  Timestamp start_{};
  std::optional<Executor::TimerId> timer_;
  bool running_ = false;
  std::function<void()> on_finished_;
  std::shared_ptr<bool> alive_ = std::make_shared<bool>(true);
};

}  // namespace fleetledger::recorder
