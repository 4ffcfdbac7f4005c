#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fleetledger/chaincode.hpp"

namespace fleetledger::contracts {

inline constexpr std::string_view kPathChaincode = "path";
inline constexpr std::string_view kObjectChaincode = "object";
inline constexpr std::string_view kCommandChaincode = "command";

/// Zero-padded so lexical key order is sequence order.
std::string format_seq(std::uint64_t seq);

std::string path_asset_id(std::string_view robot_id, std::uint64_t seq);
/// Detections are keyed per (label, robot, object) so each robot's
/// sighting of an object is one asset.
std::string object_asset_id(std::string_view label, std::string_view robot_id, std::uint64_t seq);
std::string command_asset_id(std::uint64_t seq);

/// Shortest round-trip decimal form; used for every numeric argument.
std::string format_number(double v);
double parse_number(std::string_view s);
std::int64_t parse_int(std::string_view s);

struct PathPointAsset {
  std::string asset_id;
  std::string robot_id;
  double x = 0, y = 0, z = 0, yaw = 0;
  std::int64_t stamp = 0;
  std::string owner_org;

  Bytes serialize() const;
  static PathPointAsset deserialize(ByteView bytes);
  nlohmann::json to_json() const;
};

struct DetectedObjectAsset {
  std::string asset_id;
  std::string label;
  double x = 0, y = 0, z = 0;
  std::string robot_id;
  double confidence = 0;
  std::int64_t stamp = 0;
  std::string owner_org;

  Bytes serialize() const;
  static DetectedObjectAsset deserialize(ByteView bytes);
  nlohmann::json to_json() const;
};

enum class CommandStatus : std::uint8_t { pending = 0, executing = 1, done = 2 };

std::string_view to_string(CommandStatus s);
CommandStatus command_status_from_string(std::string_view s);
/// pending -> executing -> done, nothing else.
bool legal_transition(CommandStatus from, CommandStatus to);

using Waypoint = std::array<double, 3>;

struct CommandAsset {
  std::string asset_id;
  std::string robot_id;
  std::vector<Waypoint> waypoints;
  std::string issued_by;
  CommandStatus status = CommandStatus::pending;
  std::int64_t stamp = 0;
  std::string owner_org;

  Bytes serialize() const;
  static CommandAsset deserialize(ByteView bytes);
  nlohmann::json to_json() const;
};

/// JSON array of [x,y,z] triples; throws ContractError when malformed or empty.
std::vector<Waypoint> parse_waypoints(std::string_view json_text);
std::string format_waypoints(const std::vector<Waypoint>& waypoints);

/// Functions: CreateAsset(robot_id, seq, x, y, z, yaw, stamp, owner_org),
/// ReadAsset(id), ReadAllAssets(), AssetExists(id),
/// UpdateAsset(id, x, y, z, yaw, stamp), TransferAsset(id, new_owner),
/// DeleteAsset(id), ReadTrajectory(robot_id).
class PathContract final : public Contract {
 public:
  std::string_view name() const override { return kPathChaincode; }
  std::string_view key_prefix() const override { return "path~"; }
  Bytes invoke(ChaincodeStub& stub, std::string_view function, const std::vector<std::string>& args) const override;
};

/// Functions: CreateAsset(label, robot_id, seq, x, y, z, confidence, stamp,
/// owner_org), ReadAsset, ReadAllAssets, AssetExists,
/// UpdateAsset(id, x, y, z, confidence, stamp), TransferAsset, DeleteAsset.
class ObjectContract final : public Contract {
 public:
  explicit ObjectContract(std::vector<std::string> labels);
  std::string_view name() const override { return kObjectChaincode; }
  std::string_view key_prefix() const override { return "obj~"; }
  Bytes invoke(ChaincodeStub& stub, std::string_view function, const std::vector<std::string>& args) const override;

 private:
  std::set<std::string, std::less<>> labels_;
};

/// Functions: CreateCommand(seq, robot_id, waypoints_json, stamp, owner_org)
/// (alias CreateAsset), ReadAsset, ReadAllAssets, AssetExists,
/// UpdateAsset(id, waypoints_json, stamp) while pending, TransferAsset,
/// DeleteAsset, ReadPendingCommands(robot_id), SetCommandStatus(id, status).
class CommandContract final : public Contract {
 public:
  std::string_view name() const override { return kCommandChaincode; }
  std::string_view key_prefix() const override { return "cmd~"; }
  Bytes invoke(ChaincodeStub& stub, std::string_view function, const std::vector<std::string>& args) const override;
};

/// Built-in subset of COCO category names.
const std::vector<std::string>& default_coco_labels();
/// One label per line; blank lines and '#' comments skipped.
std::vector<std::string> load_labels(const std::filesystem::path& file);

/// Path, object (with `labels`) and command contracts.
std::vector<std::shared_ptr<const Contract>> standard_contracts(std::vector<std::string> labels = default_coco_labels());

}  // namespace fleetledger::contracts
