#pragma once

#include <cstdint>
#include <optional>

#include "fleetledger/bytes.hpp"

namespace fleetledger::crypto {

/// Algorithm-identifier bytes carried in signatures and file headers.
inline constexpr std::uint8_t kSigEd25519 = 0x01;
inline constexpr std::uint8_t kHashSha256 = 0x01;

struct KeyPair {
  Bytes public_key;
  Bytes private_key;
};

/// Fresh random key pair.
KeyPair generate_keypair();
/// Key pair derived from a 32-byte seed (for reproducible test networks).
KeyPair keypair_from_seed(const Hash& seed);

/// Signature bytes are [algorithm id][raw signature].
Bytes sign(ByteView private_key, ByteView payload);
bool verify(ByteView public_key, ByteView payload, ByteView signature);

Hash sha256(ByteView data);
/// Random bytes from the OS CSPRNG.
Bytes random_bytes(std::size_t n);

}  // namespace fleetledger::crypto
