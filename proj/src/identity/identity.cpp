#include "fleetledger/identity.hpp"

#include <fstream>
#include <iterator>
#include <mutex>
#include <set>

#include "fleetledger/crypto.hpp"
#include "fleetledger/error.hpp"

namespace fleetledger {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::peer: return "peer";
    case Role::orderer: return "orderer";
    case Role::client: return "client";
    case Role::admin: return "admin";
  }
  return "unknown";
}

Role role_from_string(std::string_view name) {
  if (name == "peer") return Role::peer;
  if (name == "orderer") return Role::orderer;
  if (name == "client") return Role::client;
  if (name == "admin") return Role::admin;
  throw Error(ErrorCode::invalid_argument, "unknown role '" + std::string(name) + "'");
}

Bytes Certificate::to_be_signed() const {
  Encoder e;
  e.u64(serial).str(subject_id).str(org_id).u64(static_cast<std::uint64_t>(role)).bytes(subject_public_key);
  return std::move(e).take();
}

void Certificate::encode(Encoder& e) const {
  e.u64(serial).str(subject_id).str(org_id).u64(static_cast<std::uint64_t>(role));
  e.bytes(subject_public_key).bytes(ca_signature);
}

Certificate Certificate::decode(Decoder& d) {
  Certificate c;
  c.serial = d.u64();
  c.subject_id = d.str();
  c.org_id = d.str();
  const auto role = d.u64();
  if (role > static_cast<std::uint64_t>(Role::admin)) throw Error(ErrorCode::decode_error, "bad role");
  c.role = static_cast<Role>(role);
  c.subject_public_key = d.bytes();
  c.ca_signature = d.bytes();
  return c;
}

Bytes Certificate::serialize() const {
  Encoder e;
  encode(e);
  return std::move(e).take();
}

Certificate Certificate::deserialize(ByteView bytes) {
  Decoder d(bytes);
  auto c = decode(d);
  d.expect_done();
  return c;
}

Bytes Identity::sign(ByteView payload) const { return crypto::sign(private_key_, payload); }

Bytes Identity::serialize() const {
  Encoder e;
  certificate_.encode(e);
  e.bytes(private_key_);
  return std::move(e).take();
}

Identity Identity::deserialize(ByteView bytes) {
  Decoder d(bytes);
  auto cert = Certificate::decode(d);
  auto key = d.bytes();
  d.expect_done();
  return Identity(std::move(cert), std::move(key));
}

CertificateAuthority CertificateAuthority::create(std::string org_id) {
  if (org_id.empty()) throw Error(ErrorCode::rejected_empty_id, "org id must be non-empty");
  CertificateAuthority ca;
  ca.org_id_ = std::move(org_id);
  auto kp = crypto::generate_keypair();
  ca.root_public_key_ = std::move(kp.public_key);
  ca.root_private_key_ = std::move(kp.private_key);
  return ca;
}

CertificateAuthority CertificateAuthority::create_deterministic(std::string org_id, const Hash& seed) {
  if (org_id.empty()) throw Error(ErrorCode::rejected_empty_id, "org id must be non-empty");
  CertificateAuthority ca;
  ca.org_id_ = std::move(org_id);
  Encoder e;
  e.hash(seed).str("root").str(ca.org_id_);
  auto kp = crypto::keypair_from_seed(crypto::sha256(e.data()));
  ca.root_public_key_ = std::move(kp.public_key);
  ca.root_private_key_ = std::move(kp.private_key);
  ca.seed_ = seed;
  return ca;
}

bool CertificateAuthority::has_member(std::string_view subject_id) const {
  return subjects_.find(subject_id) != subjects_.end();
}

Identity CertificateAuthority::issue(std::string_view subject_id, Role role) {
  if (subject_id.empty()) throw Error(ErrorCode::rejected_empty_id, "subject id must be non-empty");
  if (has_member(subject_id)) {
    throw Error(ErrorCode::duplicate_subject, std::string(subject_id) + " already issued by " + org_id_);
  }
  crypto::KeyPair kp;
  if (seed_) {
    Encoder e;
    e.hash(*seed_).str("subject").str(org_id_).str(subject_id);
    kp = crypto::keypair_from_seed(crypto::sha256(e.data()));
  } else {
    kp = crypto::generate_keypair();
  }

  Certificate cert;
  cert.serial = next_serial_++;
  cert.subject_id = std::string(subject_id);
  cert.org_id = org_id_;
  cert.role = role;
  cert.subject_public_key = std::move(kp.public_key);
  cert.ca_signature = crypto::sign(root_private_key_, cert.to_be_signed());

  issued_serials_.insert(cert.serial);
  subjects_.emplace(subject_id);
  return Identity(std::move(cert), std::move(kp.private_key));
}

namespace {

// Certificates that already verified, keyed by digest of (root, cert).
class VerifiedCache {
 public:
  bool contains(const Hash& key) {
    std::lock_guard lock(mu_);
    return keys_.count(key) != 0;
  }
  void insert(const Hash& key) {
    std::lock_guard lock(mu_);
    if (keys_.size() >= kLimit) keys_.clear();
    keys_.insert(key);
  }

 private:
  static constexpr std::size_t kLimit = 4096;
  std::mutex mu_;
  std::set<Hash> keys_;
};

VerifiedCache& verified_cache() {
  static VerifiedCache cache;
  return cache;
}

}  // namespace

bool verify_identity(const Certificate& cert, const TrustedRoots& roots) {
  auto it = roots.find(cert.org_id);
  if (it == roots.end()) return false;
  const auto tbs = cert.to_be_signed();
  Encoder e;
  e.bytes(it->second).bytes(tbs).bytes(cert.ca_signature);
  const auto key = crypto::sha256(e.data());
  if (verified_cache().contains(key)) return true;
  if (!crypto::verify(it->second, tbs, cert.ca_signature)) return false;
  verified_cache().insert(key);
  return true;
}

bool verify_signature(const Certificate& cert, ByteView payload, ByteView signature) {
  return crypto::verify(cert.subject_public_key, payload, signature);
}

void save_to_wallet(const std::filesystem::path& dir, const Identity& identity) {
  std::filesystem::create_directories(dir);
  const auto path = dir / identity.subject_id();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path.string());
  const auto bytes = identity.serialize();
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io_error, "short write to " + path.string());
}

Identity load_identity_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot read wallet file " + file.string());
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return Identity::deserialize(bytes);
}

Identity load_from_wallet(const std::filesystem::path& dir, std::string_view subject_id) {
  return load_identity_file(dir / std::string(subject_id));
}

}  // namespace fleetledger
