#include "fleetledger/recorder.hpp"

#include <cmath>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "fleetledger/contracts.hpp"
#include "fleetledger/error.hpp"

namespace fleetledger::recorder {

using contracts::format_number;

RateGate::RateGate(double max_freq) {
  if (!std::isfinite(max_freq) || max_freq <= 0) {
    throw Error(ErrorCode::invalid_argument, "max_freq must be a positive number");
  }
  period_ns_ = std::llround(1e9 / max_freq);
}

bool RateGate::admit(std::int64_t stamp_ns) {
  if (last_ && stamp_ns - *last_ < period_ns_) return false;
  last_ = stamp_ns;
  return true;
}

void RecorderConfig::validate() const {
  if (data_topic.empty()) throw Error(ErrorCode::invalid_argument, "recorder needs a data topic");
  if (!std::isfinite(max_freq) || max_freq <= 0) throw Error(ErrorCode::invalid_argument, "max_freq must be > 0");
  if (chaincode.empty() || channel.empty()) throw Error(ErrorCode::invalid_argument, "channel and chaincode required");
}

RecorderBase::RecorderBase(LedgerClient& client, std::string owner_org, bool wait_for_commit,
                           bool download_after_write)
    : client_(client),
      owner_org_(std::move(owner_org)),
      wait_for_commit_(wait_for_commit),
      download_after_write_(download_after_write) {}

RecorderBase::~RecorderBase() {
  *alive_ = false;
  if (bus_ && subscription_) bus_->unsubscribe(*subscription_);
}

void RecorderBase::attach(sim::TopicBus& bus, const std::string& topic) {
  if (bus_ && subscription_) bus_->unsubscribe(*subscription_);
  bus_ = &bus;
  subscription_ = bus.subscribe(topic, [this](const sim::Message& m) { on_message(m); });
}

void RecorderBase::submit(Invocation inv, std::int64_t stamp, bool absorb_existing) {
  ++stats_.recorded;
  recorded_stamps_.push_back(stamp);
  const std::string chaincode = inv.chaincode;
  auto on_committed = [this, alive = alive_, absorb_existing, chaincode](const SubmitOutcome& out) {
    if (!*alive) return;
    if (!out.ordered) {
      if (absorb_existing && out.error.find("already exists") != std::string::npos) {
        ++stats_.skipped_existing;
        spdlog::debug("recorder: skipping existing asset ({})", out.error);
        return;
      }
      ++stats_.failed;
      ++stats_.codes[out.code ? std::string(to_string(*out.code)) : std::string("NOT_ORDERED")];
      spdlog::warn("recorder: submission failed: {}", out.error);
      return;
    }
    if (!out.code) return;
    ++stats_.codes[std::string(to_string(*out.code))];
    if (!out.valid()) {
      ++stats_.invalid;
      return;
    }
    if (wait_for_commit_) ++stats_.durable;
    if (download_after_write_) {
      client_.evaluate({chaincode, "ReadAllAssets", {}}, [this, alive](const EvaluateOutcome& e) {
        if (!*alive || !e.ok) return;
        ++stats_.downloads;
        stats_.last_download_size = nlohmann::json::parse(to_string(e.payload)).size();
      });
    }
  };
  auto on_accepted = [this, alive = alive_](const SubmitOutcome& out) {
    if (*alive && out.ordered && !wait_for_commit_) ++stats_.durable;
  };
  client_.submit(inv, std::move(on_committed), std::move(on_accepted));
}

Recorder::Recorder(LedgerClient& client, RecorderConfig config)
    : RecorderBase(client, client.identity().org_id(), config.wait_for_commit, config.download_after_write),
      config_(std::move(config)),
      gate_((config_.validate(), config_.max_freq)) {}

void Recorder::on_message(const sim::Message& m) {
  ++stats_.received;
  if (!gate_.admit(m.stamp)) return;
  const auto stamp = std::to_string(m.stamp);
  if (const auto* p = std::get_if<sim::PoseMsg>(&m.payload)) {
    submit({config_.chaincode,
            "CreateAsset",
            {p->robot_id, std::to_string(next_seq_++), format_number(p->pose.x), format_number(p->pose.y),
             format_number(p->pose.z), format_number(p->pose.yaw), stamp, owner_org_}},
           m.stamp, false);
  } else if (const auto* d = std::get_if<sim::DetectionMsg>(&m.payload)) {
    submit({config_.chaincode,
            "CreateAsset",
            {d->label, d->robot_id, std::to_string(d->object_index), format_number(d->position.x),
             format_number(d->position.y), format_number(d->position.z), format_number(d->confidence), stamp,
             owner_org_}},
           m.stamp, true);
  }
}

DetectionRecorder::DetectionRecorder(LedgerClient& client, bool wait_for_commit)
    : RecorderBase(client, client.identity().org_id(), wait_for_commit, false) {}

void DetectionRecorder::on_message(const sim::Message& m) {
  ++stats_.received;
  const auto* d = std::get_if<sim::DetectionMsg>(&m.payload);
  if (!d) return;
  submit({std::string(contracts::kObjectChaincode),
          "CreateAsset",
          {d->label, d->robot_id, std::to_string(d->object_index), format_number(d->position.x),
           format_number(d->position.y), format_number(d->position.z), format_number(d->confidence),
           std::to_string(m.stamp), owner_org_}},
         m.stamp, true);
}

CommandListener::CommandListener(LedgerClient& client, sim::Simulation& sim, std::string robot_id,
                                 Duration poll_period)
    : client_(client), sim_(sim), robot_id_(std::move(robot_id)), poll_period_(poll_period) {}

CommandListener::~CommandListener() {
  *alive_ = false;
  stop();
}

void CommandListener::start() {
  if (running_) return;
  running_ = true;
  poll();
}

void CommandListener::stop() {
  running_ = false;
  if (timer_) client_.executor().cancel(*timer_);
  timer_.reset();
}

void CommandListener::poll() {
  auto& ex = client_.executor();
  if (running_) {
    if (timer_) ex.cancel(*timer_);
    timer_ = ex.schedule_after(poll_period_, [this, alive = alive_] {
      if (!*alive) return;
      timer_.reset();
      poll();
    });
  }
  if (poll_in_flight_) return;
  poll_in_flight_ = true;
  client_.evaluate({std::string(contracts::kCommandChaincode), "ReadPendingCommands", {robot_id_}},
                   [this, alive = alive_](const EvaluateOutcome& out) {
                     if (!*alive) return;
                     poll_in_flight_ = false;
                     if (!out.ok) {
                       spdlog::warn("command listener {}: poll failed: {}", robot_id_, out.error);
                       return;
                     }
                     // ReadPendingCommands returns assets in key order, i.e. sequence order.
                     for (const auto& cmd : nlohmann::json::parse(to_string(out.payload))) {
                       const auto id = cmd.at("asset_id").get<std::string>();
                       if (!seen_.insert(id).second) continue;
                       std::vector<sim::Vec3> points;
                       for (const auto& w : cmd.at("waypoints")) {
                         points.push_back({w.at(0).get<double>(), w.at(1).get<double>(), w.at(2).get<double>()});
                       }
                       client_.submit({std::string(contracts::kCommandChaincode), "SetCommandStatus", {id, "executing"}},
                                      [this, alive, id, points](const SubmitOutcome& s) {
                                        if (!*alive) return;
                                        if (!s.valid()) {
                                          spdlog::warn("command listener {}: could not start {}: {}", robot_id_, id,
                                                       s.error.empty() && s.code ? std::string(to_string(*s.code))
                                                                                 : s.error);
                                          seen_.erase(id);
                                          return;
                                        }
                                        started_.push_back(id);
                                        sim_.enqueue_command(robot_id_, id, points);
                                      });
                     }
                   });
}

void CommandListener::command_done(const std::string& command_id) {
  client_.submit({std::string(contracts::kCommandChaincode), "SetCommandStatus", {command_id, "done"}},
                 [this, alive = alive_, command_id](const SubmitOutcome& s) {
                   if (!*alive) return;
                   if (s.valid()) {
                     completed_.push_back(command_id);
                   } else {
                     spdlog::warn("command listener {}: could not finish {}", robot_id_, command_id);
                   }
                 });
}

MissionRunner::MissionRunner(Executor& executor, sim::WorldModel world, sim::MissionSpec mission,
                             ClientFor client_for, MissionOptions options)
    : executor_(executor), sim_(std::move(world), std::move(mission), bus_), options_(std::move(options)) {
  for (const auto& spec : sim_.mission().robots) {
    auto& client = client_for(spec.id);
    if (options_.record_poses) {
      RecorderConfig cfg;
      cfg.data_topic = sim::pose_topic(spec.id);
      cfg.max_freq = options_.pose_max_freq;
      cfg.channel = options_.channel;
      cfg.chaincode = std::string(contracts::kPathChaincode);
      cfg.download_after_write = options_.download_after_write;
      auto rec = std::make_unique<Recorder>(client, cfg);
      rec->attach(bus_, cfg.data_topic);
      pose_recorders_.emplace(spec.id, std::move(rec));
    }
    if (options_.record_detections) {
      auto rec = std::make_unique<DetectionRecorder>(client);
      rec->attach(bus_, sim::detection_topic(spec.id));
      detection_recorders_.emplace(spec.id, std::move(rec));
    }
    if (options_.listen_commands) {
      listeners_.emplace(spec.id, std::make_unique<CommandListener>(client, sim_, spec.id, options_.command_poll));
    }
  }
  sim_.on_command_done([this](const std::string& robot, const std::string& command) {
    auto it = listeners_.find(robot);
    if (it != listeners_.end()) it->second->command_done(command);
  });
}

MissionRunner::~MissionRunner() {
  *alive_ = false;
  stop();
}

void MissionRunner::start() {
  if (running_) return;
  running_ = true;
  start_ = executor_.now() - Duration(sim_.now());
  for (auto& [id, l] : listeners_) l->start();
  schedule_tick();
}

void MissionRunner::stop() {
  running_ = false;
  if (timer_) executor_.cancel(*timer_);
  timer_.reset();
  for (auto& [id, l] : listeners_) l->stop();
}

void MissionRunner::schedule_tick() {
  if (!running_) return;
  if (sim_.finished()) {
    running_ = false;
    for (auto& [id, l] : listeners_) l->stop();
    if (on_finished_) on_finished_();
    return;
  }
  timer_ = executor_.schedule_at(start_ + Duration(sim_.now()), [this, alive = alive_] {
    if (!*alive) return;
    timer_.reset();
    sim_.tick();
    schedule_tick();
  });
}

const Recorder& MissionRunner::pose_recorder(const std::string& robot_id) const {
  auto it = pose_recorders_.find(robot_id);
  if (it == pose_recorders_.end()) throw Error(ErrorCode::invalid_argument, "no pose recorder for " + robot_id);
  return *it->second;
}

const DetectionRecorder& MissionRunner::detection_recorder(const std::string& robot_id) const {
  auto it = detection_recorders_.find(robot_id);
  if (it == detection_recorders_.end()) throw Error(ErrorCode::invalid_argument, "no detection recorder for " + robot_id);
  return *it->second;
}

CommandListener& MissionRunner::command_listener(const std::string& robot_id) {
  auto it = listeners_.find(robot_id);
  if (it == listeners_.end()) throw Error(ErrorCode::invalid_argument, "no command listener for " + robot_id);
  return *it->second;
}

}  // namespace fleetledger::recorder
