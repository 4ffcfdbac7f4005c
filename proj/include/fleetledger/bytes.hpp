#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fleetledger {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// 32-byte digest, used for tx ids and block hashes.
using Hash = std::array<std::uint8_t, 32>;

std::string to_hex(ByteView bytes);
inline std::string to_hex(const Hash& h) { return to_hex(ByteView(h.data(), h.size())); }

/// Throws std::invalid_argument on odd length or non-hex characters.
Bytes from_hex(std::string_view hex);
Hash hash_from_hex(std::string_view hex);

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }
inline std::string to_string(ByteView b) { return std::string(b.begin(), b.end()); }

}  // namespace fleetledger
