#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fleetledger {

enum class ErrorCode {
  invalid_argument,
  rejected_empty_id,
  duplicate_subject,
  duplicate_org,
  duplicate_channel,
  unknown_org,
  unknown_channel,
  unknown_peer,
  not_a_member,
  unknown_chaincode,
  insufficient_approvals,
  out_of_order,
  chain_broken,
  decode_error,
  io_error,
  endorsement_divergence,
  insufficient_endorsements,
  contract_error,
  protocol_error,
  network_down,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fleetledger
