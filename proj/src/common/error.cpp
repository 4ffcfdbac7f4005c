#include "fleetledger/error.hpp"

namespace fleetledger {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::rejected_empty_id: return "rejected-empty-id";
    case ErrorCode::duplicate_subject: return "duplicate-subject";
    case ErrorCode::duplicate_org: return "duplicate-org";
    case ErrorCode::duplicate_channel: return "duplicate-channel";
    case ErrorCode::unknown_org: return "unknown-org";
    case ErrorCode::unknown_channel: return "unknown-channel";
    case ErrorCode::unknown_peer: return "unknown-peer";
    case ErrorCode::not_a_member: return "not-a-member";
    case ErrorCode::unknown_chaincode: return "unknown-chaincode";
    case ErrorCode::insufficient_approvals: return "insufficient-approvals";
    case ErrorCode::out_of_order: return "out-of-order";
    case ErrorCode::chain_broken: return "chain-broken";
    case ErrorCode::decode_error: return "decode-error";
    case ErrorCode::io_error: return "io-error";
    case ErrorCode::endorsement_divergence: return "endorsement-divergence";
    case ErrorCode::insufficient_endorsements: return "insufficient-endorsements";
    case ErrorCode::contract_error: return "contract-error";
    case ErrorCode::protocol_error: return "protocol-error";
    case ErrorCode::network_down: return "network-down";
  }
  return "unknown";
}

}  // namespace fleetledger
