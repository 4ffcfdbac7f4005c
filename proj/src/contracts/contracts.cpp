#include <algorithm>

#include "fleetledger/contracts.hpp"

namespace fleetledger::contracts {

namespace {

using Args = std::vector<std::string>;

void expect_args(const Args& args, std::size_t n, std::string_view function) {
  if (args.size() != n) {
    throw ContractError(std::string(function) + " expects " + std::to_string(n) + " arguments, got " +
                        std::to_string(args.size()));
  }
}

/// Ids are embedded in keys, so separators and dump delimiters are banned.
void check_token(std::string_view value, std::string_view what) {
  if (value.empty()) throw ContractError(std::string(what) + " must be non-empty");
  if (value.find_first_of("~\t\n\r") != std::string_view::npos) {
    throw ContractError(std::string(what) + " contains a reserved character");
  }
}

void check_owner(const ChaincodeStub& stub, std::string_view org) {
  if (!stub.is_channel_member(org)) throw ContractError("owner '" + std::string(org) + "' is not a channel member");
}

std::uint64_t parse_seq(std::string_view s) {
  const auto v = parse_int(s);
  if (v < 0 || v > 999999) throw ContractError("sequence must be in [0, 999999]");
  return static_cast<std::uint64_t>(v);
}

Bytes json_payload(const nlohmann::json& j) { return to_bytes(j.dump()); }

Bytes bool_payload(bool b) { return to_bytes(b ? "true" : "false"); }

Bytes require(ChaincodeStub& stub, const std::string& id) {
  auto value = stub.get(id);
  if (!value) throw ContractError("asset " + id + " not found");
  return std::move(*value);
}

void require_absent(ChaincodeStub& stub, const std::string& id) {
  if (stub.get(id)) throw ContractError("asset " + id + " already exists");
}

template <class Asset>
Bytes read_all(ChaincodeStub& stub, std::string_view prefix) {
  auto out = nlohmann::json::array();
  for (const auto& [key, value] : stub.range(prefix)) out.push_back(Asset::deserialize(value).to_json());
  return json_payload(out);
}

/// Functions every asset contract exposes in the same shape.
template <class Asset>
std::optional<Bytes> common_function(ChaincodeStub& stub, std::string_view prefix, std::string_view function,
                                     const Args& args) {
  if (function == "ReadAllAssets") {
    expect_args(args, 0, function);
    return read_all<Asset>(stub, prefix);
  }
  if (function == "AssetExists") {
    expect_args(args, 1, function);
    return bool_payload(stub.get(args[0]).has_value());
  }
  if (function == "ReadAsset") {
    expect_args(args, 1, function);
    return json_payload(Asset::deserialize(require(stub, args[0])).to_json());
  }
  if (function == "TransferAsset") {
    expect_args(args, 2, function);
    auto asset = Asset::deserialize(require(stub, args[0]));
    check_owner(stub, args[1]);
    auto previous = asset.owner_org;
    asset.owner_org = args[1];
    stub.put(args[0], asset.serialize());
    return to_bytes(previous);
  }
  if (function == "DeleteAsset") {
    expect_args(args, 1, function);
    require(stub, args[0]);
    stub.del(args[0]);
    return Bytes{};
  }
  return std::nullopt;
}

[[noreturn]] void unknown_function(std::string_view contract, std::string_view function) {
  throw ContractError("contract " + std::string(contract) + " has no function " + std::string(function));
}

}  // namespace

Bytes PathContract::invoke(ChaincodeStub& stub, std::string_view function, const Args& args) const {
  if (function == "CreateAsset") {
    expect_args(args, 8, function);
    PathPointAsset a;
    check_token(args[0], "robot_id");
    a.robot_id = args[0];
    a.asset_id = path_asset_id(a.robot_id, parse_seq(args[1]));
    a.x = parse_number(args[2]);
    a.y = parse_number(args[3]);
    a.z = parse_number(args[4]);
    a.yaw = parse_number(args[5]);
    a.stamp = parse_int(args[6]);
    check_owner(stub, args[7]);
    a.owner_org = args[7];
    require_absent(stub, a.asset_id);
    stub.put(a.asset_id, a.serialize());
    return json_payload(a.to_json());
  }
  if (function == "UpdateAsset") {
    expect_args(args, 6, function);
    auto a = PathPointAsset::deserialize(require(stub, args[0]));
    a.x = parse_number(args[1]);
    a.y = parse_number(args[2]);
    a.z = parse_number(args[3]);
    a.yaw = parse_number(args[4]);
    a.stamp = parse_int(args[5]);
    stub.put(a.asset_id, a.serialize());
    return json_payload(a.to_json());
  }
  if (function == "ReadTrajectory") {
    expect_args(args, 1, function);
    check_token(args[0], "robot_id");
    return read_all<PathPointAsset>(stub, "path~" + args[0] + "~");
  }
  if (auto out = common_function<PathPointAsset>(stub, key_prefix(), function, args)) return std::move(*out);
  unknown_function(name(), function);
}

ObjectContract::ObjectContract(std::vector<std::string> labels) : labels_(labels.begin(), labels.end()) {}

Bytes ObjectContract::invoke(ChaincodeStub& stub, std::string_view function, const Args& args) const {
  auto check_confidence = [](double c) {
    if (c < 0.0 || c > 1.0) throw ContractError("confidence must be within [0, 1]");
    return c;
  };
  if (function == "CreateAsset") {
    expect_args(args, 9, function);
    DetectedObjectAsset a;
    check_token(args[0], "label");
    if (!labels_.count(args[0])) throw ContractError("label '" + args[0] + "' is not a configured category");
    a.label = args[0];
    check_token(args[1], "robot_id");
    a.robot_id = args[1];
    a.asset_id = object_asset_id(a.label, a.robot_id, parse_seq(args[2]));
    a.x = parse_number(args[3]);
    a.y = parse_number(args[4]);
    a.z = parse_number(args[5]);
    a.confidence = check_confidence(parse_number(args[6]));
    a.stamp = parse_int(args[7]);
    check_owner(stub, args[8]);
    a.owner_org = args[8];
    require_absent(stub, a.asset_id);
    stub.put(a.asset_id, a.serialize());
    return json_payload(a.to_json());
  }
  if (function == "UpdateAsset") {
    expect_args(args, 6, function);
    auto a = DetectedObjectAsset::deserialize(require(stub, args[0]));
    a.x = parse_number(args[1]);
    a.y = parse_number(args[2]);
    a.z = parse_number(args[3]);
    a.confidence = check_confidence(parse_number(args[4]));
    a.stamp = parse_int(args[5]);
    stub.put(a.asset_id, a.serialize());
    return json_payload(a.to_json());
  }
  if (auto out = common_function<DetectedObjectAsset>(stub, key_prefix(), function, args)) return std::move(*out);
  unknown_function(name(), function);
}

Bytes CommandContract::invoke(ChaincodeStub& stub, std::string_view function, const Args& args) const {
  if (function == "CreateCommand" || function == "CreateAsset") {
    expect_args(args, 5, function);
    CommandAsset a;
    a.asset_id = command_asset_id(parse_seq(args[0]));
    check_token(args[1], "robot_id");
    a.robot_id = args[1];
    a.waypoints = parse_waypoints(args[2]);
    a.stamp = parse_int(args[3]);
    check_owner(stub, args[4]);
    a.owner_org = args[4];
    a.issued_by = stub.creator().subject_id;
    a.status = CommandStatus::pending;
    require_absent(stub, a.asset_id);
    stub.put(a.asset_id, a.serialize());
    return json_payload(a.to_json());
  }
  if (function == "UpdateAsset") {
    expect_args(args, 3, function);
    auto a = CommandAsset::deserialize(require(stub, args[0]));
    if (a.status != CommandStatus::pending) throw ContractError("command " + a.asset_id + " is no longer pending");
    a.waypoints = parse_waypoints(args[1]);
    a.stamp = parse_int(args[2]);
    stub.put(a.asset_id, a.serialize());
    return json_payload(a.to_json());
  }
  if (function == "ReadPendingCommands") {
    expect_args(args, 1, function);
    auto out = nlohmann::json::array();
    for (const auto& [key, value] : stub.range(key_prefix())) {
      auto a = CommandAsset::deserialize(value);
      if (a.robot_id == args[0] && a.status == CommandStatus::pending) out.push_back(a.to_json());
    }
    return json_payload(out);
  }
  if (function == "SetCommandStatus") {
    expect_args(args, 2, function);
    auto a = CommandAsset::deserialize(require(stub, args[0]));
    const auto next = command_status_from_string(args[1]);
    if (!legal_transition(a.status, next)) {
      throw ContractError("illegal transition " + std::string(to_string(a.status)) + " -> " +
                          std::string(to_string(next)));
    }
    a.status = next;
    stub.put(a.asset_id, a.serialize());
    return json_payload(a.to_json());
  }
  if (auto out = common_function<CommandAsset>(stub, key_prefix(), function, args)) return std::move(*out);
  unknown_function(name(), function);
}

}  // namespace fleetledger::contracts
