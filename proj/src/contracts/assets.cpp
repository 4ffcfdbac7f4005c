#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "fleetledger/codec.hpp"
#include "fleetledger/contracts.hpp"

namespace fleetledger::contracts {

std::string format_seq(std::uint64_t seq) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06llu", static_cast<unsigned long long>(seq));
  return buf;
}

std::string path_asset_id(std::string_view robot_id, std::uint64_t seq) {
  return "path~" + std::string(robot_id) + "~" + format_seq(seq);
}

std::string object_asset_id(std::string_view label, std::string_view robot_id, std::uint64_t seq) {
  return "obj~" + std::string(label) + "~" + std::string(robot_id) + "~" + format_seq(seq);
}

std::string command_asset_id(std::uint64_t seq) { return "cmd~" + format_seq(seq); }

std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_number(std::string_view s) {
  double v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size() || !std::isfinite(v)) {
    throw ContractError("not a finite number: '" + std::string(s) + "'");
  }
  return v;
}

std::int64_t parse_int(std::string_view s) {
  std::int64_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) {
    throw ContractError("not an integer: '" + std::string(s) + "'");
  }
  return v;
}

namespace {

template <class T, class F>
T decode_asset(ByteView bytes, F&& read) {
  try {
    Decoder d(bytes);
    T asset = read(d);
    d.expect_done();
    return asset;
  } catch (const Error& e) {
    throw ContractError(std::string("corrupt asset record: ") + e.what());
  }
}

}  // namespace

Bytes PathPointAsset::serialize() const {
  Encoder e;
  e.str(asset_id).str(robot_id).f64(x).f64(y).f64(z).f64(yaw).i64(stamp).str(owner_org);
  return std::move(e).take();
}

PathPointAsset PathPointAsset::deserialize(ByteView bytes) {
  return decode_asset<PathPointAsset>(bytes, [](Decoder& d) {
    PathPointAsset a;
    a.asset_id = d.str();
    a.robot_id = d.str();
    a.x = d.f64();
    a.y = d.f64();
    a.z = d.f64();
    a.yaw = d.f64();
    a.stamp = d.i64();
    a.owner_org = d.str();
    return a;
  });
}

nlohmann::json PathPointAsset::to_json() const {
  return {{"asset_id", asset_id}, {"robot_id", robot_id}, {"x", x},
          {"y", y},               {"z", z},               {"yaw", yaw},
          {"stamp", std::to_string(stamp)}, {"owner_org", owner_org}};
}

Bytes DetectedObjectAsset::serialize() const {
  Encoder e;
  e.str(asset_id).str(label).f64(x).f64(y).f64(z).str(robot_id).f64(confidence).i64(stamp).str(owner_org);
  return std::move(e).take();
}

DetectedObjectAsset DetectedObjectAsset::deserialize(ByteView bytes) {
  return decode_asset<DetectedObjectAsset>(bytes, [](Decoder& d) {
    DetectedObjectAsset a;
    a.asset_id = d.str();
    a.label = d.str();
    a.x = d.f64();
    a.y = d.f64();
    a.z = d.f64();
    a.robot_id = d.str();
    a.confidence = d.f64();
    a.stamp = d.i64();
    a.owner_org = d.str();
    return a;
  });
}

nlohmann::json DetectedObjectAsset::to_json() const {
  return {{"asset_id", asset_id}, {"label", label},           {"x", x},
          {"y", y},               {"z", z},                   {"robot_id", robot_id},
          {"confidence", confidence}, {"stamp", std::to_string(stamp)}, {"owner_org", owner_org}};
}

std::string_view to_string(CommandStatus s) {
  switch (s) {
    case CommandStatus::pending: return "pending";
    case CommandStatus::executing: return "executing";
    case CommandStatus::done: return "done";
  }
  return "unknown";
}

CommandStatus command_status_from_string(std::string_view s) {
  if (s == "pending") return CommandStatus::pending;
  if (s == "executing") return CommandStatus::executing;
  if (s == "done") return CommandStatus::done;
  throw ContractError("unknown command status '" + std::string(s) + "'");
}

bool legal_transition(CommandStatus from, CommandStatus to) {
  return (from == CommandStatus::pending && to == CommandStatus::executing) ||
         (from == CommandStatus::executing && to == CommandStatus::done);
}

Bytes CommandAsset::serialize() const {
  Encoder e;
  e.str(asset_id).str(robot_id);
  e.list(waypoints, [](Encoder& enc, const Waypoint& w) { enc.f64(w[0]).f64(w[1]).f64(w[2]); });
  e.str(issued_by).u64(static_cast<std::uint64_t>(status)).i64(stamp).str(owner_org);
  return std::move(e).take();
}

CommandAsset CommandAsset::deserialize(ByteView bytes) {
  return decode_asset<CommandAsset>(bytes, [](Decoder& d) {
    CommandAsset a;
    a.asset_id = d.str();
    a.robot_id = d.str();
    a.waypoints = d.list([](Decoder& dec) { return Waypoint{dec.f64(), dec.f64(), dec.f64()}; });
    a.issued_by = d.str();
    const auto status = d.u64();
    if (status > static_cast<std::uint64_t>(CommandStatus::done)) throw Error(ErrorCode::decode_error, "bad status");
    a.status = static_cast<CommandStatus>(status);
    a.stamp = d.i64();
    a.owner_org = d.str();
    return a;
  });
}

nlohmann::json CommandAsset::to_json() const {
  auto wps = nlohmann::json::array();
  for (const auto& w : waypoints) wps.push_back({w[0], w[1], w[2]});
  return {{"asset_id", asset_id},
          {"robot_id", robot_id},
          {"waypoints", wps},
          {"issued_by", issued_by},
          {"status", std::string(to_string(status))},
          {"stamp", std::to_string(stamp)},
          {"owner_org", owner_org}};
}

std::vector<Waypoint> parse_waypoints(std::string_view json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("waypoints are not valid JSON: ") + e.what());
  }
  if (!j.is_array() || j.empty()) throw ContractError("waypoints must be a non-empty array");
  std::vector<Waypoint> out;
  for (const auto& w : j) {
    if (!w.is_array() || w.size() != 3) throw ContractError("each waypoint must be [x, y, z]");
    Waypoint p{};
    for (std::size_t i = 0; i < 3; ++i) {
      if (!w[i].is_number()) throw ContractError("waypoint coordinates must be numbers");
      p[i] = w[i].get<double>();
      if (!std::isfinite(p[i])) throw ContractError("waypoint coordinates must be finite");
    }
    out.push_back(p);
  }
  return out;
}

std::string format_waypoints(const std::vector<Waypoint>& waypoints) {
  auto j = nlohmann::json::array();
  for (const auto& w : waypoints) j.push_back({w[0], w[1], w[2]});
  return j.dump();
}

const std::vector<std::string>& default_coco_labels() {
  static const std::vector<std::string> labels = {
      "backpack", "bottle", "cup",   "bowl",   "laptop", "mouse",       "keyboard", "cell phone",
      "book",     "clock",  "vase",  "scissors", "teddy bear", "potted plant", "chair", "tv",
      "suitcase", "umbrella", "handbag", "sports ball"};
  return labels;
}

std::vector<std::string> load_labels(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::io_error, "cannot read label file " + file.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    const auto start = line.find_first_not_of(' ');
    if (start == std::string::npos || line[start] == '#') continue;
    out.push_back(line.substr(start));
  }
  return out;
}

std::vector<std::shared_ptr<const Contract>> standard_contracts(std::vector<std::string> labels) {
  return {std::make_shared<PathContract>(), std::make_shared<ObjectContract>(std::move(labels)),
          std::make_shared<CommandContract>()};
}

}  // namespace fleetledger::contracts
