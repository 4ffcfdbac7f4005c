#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "fleetledger/bytes.hpp"
#include "fleetledger/codec.hpp"

namespace fleetledger {

enum class Role : std::uint8_t { peer = 0, orderer = 1, client = 2, admin = 3 };

std::string_view to_string(Role role);
Role role_from_string(std::string_view name);

/// A subject's public key bound to an org by the org CA's signature. Chain
/// depth is one: org root key signs subject certificates directly.
struct Certificate {
  std::uint64_t serial = 0;
  std::string subject_id;
  std::string org_id;
  Role role = Role::client;
  Bytes subject_public_key;
  Bytes ca_signature;

  /// Canonical encoding of every field except ca_signature.
  Bytes to_be_signed() const;
  void encode(Encoder& e) const;
  static Certificate decode(Decoder& d);
  Bytes serialize() const;
  static Certificate deserialize(ByteView bytes);

  bool operator==(const Certificate&) const = default;
};

/// org_id -> root public key of the org CA.
using TrustedRoots = std::map<std::string, Bytes, std::less<>>;

class Identity {
 public:
  Identity() = default;
  Identity(Certificate cert, Bytes private_key)
      : certificate_(std::move(cert)), private_key_(std::move(private_key)) {}

  const Certificate& certificate() const { return certificate_; }
  const std::string& subject_id() const { return certificate_.subject_id; }
  const std::string& org_id() const { return certificate_.org_id; }
  Bytes sign(ByteView payload) const;

  Bytes serialize() const;
  static Identity deserialize(ByteView bytes);

 private:
  Certificate certificate_;
  Bytes private_key_;
};

class CertificateAuthority {
 public:
  /// Fresh random root key. Throws Error(rejected_empty_id) for an empty id.
  static CertificateAuthority create(std::string org_id);
  /// Root and subject keys derived from `seed`; same seed, same keys.
  static CertificateAuthority create_deterministic(std::string org_id, const Hash& seed);

  /// Throws Error(duplicate_subject) when subject_id was already issued.
  Identity issue(std::string_view subject_id, Role role);

  const std::string& org_id() const { return org_id_; }
  const Bytes& root_public_key() const { return root_public_key_; }
  const std::set<std::uint64_t>& issued_serials() const { return issued_serials_; }
  bool has_member(std::string_view subject_id) const;

 private:
  CertificateAuthority() = default;

  std::string org_id_;
  Bytes root_public_key_;
  Bytes root_private_key_;
  std::optional<Hash> seed_;
  std::uint64_t next_serial_ = 1;
  std::set<std::uint64_t> issued_serials_;
  std::set<std::string, std::less<>> subjects_;
};

/// True iff the cert's org is trusted and the CA signature checks out.
bool verify_identity(const Certificate& cert, const TrustedRoots& roots);

/// Signature made by the cert's subject over payload.
bool verify_signature(const Certificate& cert, ByteView payload, ByteView signature);

/// One file per identity, named by subject id, holding canonical bytes.
void save_to_wallet(const std::filesystem::path& dir, const Identity& identity);
Identity load_from_wallet(const std::filesystem::path& dir, std::string_view subject_id);
/// Loads a wallet file by path.
Identity load_identity_file(const std::filesystem::path& file);

}  // namespace fleetledger
