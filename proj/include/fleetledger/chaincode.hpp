#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fleetledger/identity.hpp"
#include "fleetledger/ledger.hpp"

namespace fleetledger {

/// Raised by contract code; surfaces as an error response, never a write.
class ContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Contract view of the world state during simulation. Reads come from the
/// committed snapshot and are recorded with their versions; writes are
/// buffered. Every key must carry the contract's namespace prefix.
class ChaincodeStub {
 public:
  ChaincodeStub(const WorldState& snapshot, std::string key_prefix, const Certificate& creator,
                std::vector<std::string> channel_members);

  std::optional<Bytes> get(std::string_view key);
  void put(std::string_view key, Bytes value);
  void del(std::string_view key);
  /// Entries under `prefix` (which must itself be inside the namespace).
  std::vector<std::pair<std::string, Bytes>> range(std::string_view prefix);

  const Certificate& creator() const { return creator_; }
  const std::vector<std::string>& channel_members() const { return members_; }
  bool is_channel_member(std::string_view org) const;

  RwSet take_rwset() const;

 private:
  void guard(std::string_view key) const;

  const WorldState& snapshot_;
  std::string prefix_;
  const Certificate& creator_;
  std::vector<std::string> members_;
  std::map<std::string, std::optional<Version>, std::less<>> reads_;
  std::map<std::string, WriteItem, std::less<>> writes_;
};

class Contract {
 public:
  virtual ~Contract() = default;
  virtual std::string_view name() const = 0;
  /// Namespace every key this contract touches must start with.
  virtual std::string_view key_prefix() const = 0;
  /// Deterministic in (function, args, snapshot). Throws ContractError.
  virtual Bytes invoke(ChaincodeStub& stub, std::string_view function, const std::vector<std::string>& args) const = 0;
};

}  // namespace fleetledger
