#include "fleetledger/crypto.hpp"

#include <sodium.h>

#include <stdexcept>

namespace fleetledger::crypto {

namespace {

void ensure_init() {
  static const bool ok = sodium_init() >= 0;
  if (!ok) throw std::runtime_error("libsodium initialisation failed");
}

}  // namespace

KeyPair generate_keypair() {
  ensure_init();
  KeyPair kp{Bytes(crypto_sign_PUBLICKEYBYTES), Bytes(crypto_sign_SECRETKEYBYTES)};
  crypto_sign_keypair(kp.public_key.data(), kp.private_key.data());
  return kp;
}

KeyPair keypair_from_seed(const Hash& seed) {
  ensure_init();
  static_assert(crypto_sign_SEEDBYTES == 32);
  KeyPair kp{Bytes(crypto_sign_PUBLICKEYBYTES), Bytes(crypto_sign_SECRETKEYBYTES)};
  crypto_sign_seed_keypair(kp.public_key.data(), kp.private_key.data(), seed.data());
  return kp;
}

Bytes sign(ByteView private_key, ByteView payload) {
  ensure_init();
  if (private_key.size() != crypto_sign_SECRETKEYBYTES) {
    throw std::invalid_argument("private key has wrong length");
  }
  Bytes sig(1 + crypto_sign_BYTES);
  sig[0] = kSigEd25519;
  crypto_sign_detached(sig.data() + 1, nullptr, payload.data(), payload.size(), private_key.data());
  return sig;
}

bool verify(ByteView public_key, ByteView payload, ByteView signature) {
  ensure_init();
  if (public_key.size() != crypto_sign_PUBLICKEYBYTES) return false;
  if (signature.size() != 1 + crypto_sign_BYTES || signature[0] != kSigEd25519) return false;
  return crypto_sign_verify_detached(signature.data() + 1, payload.data(), payload.size(),
                                     public_key.data()) == 0;
}

Hash sha256(ByteView data) {
  ensure_init();
  Hash h{};
  crypto_hash_sha256(h.data(), data.data(), data.size());
  return h;
}

Bytes random_bytes(std::size_t n) {
  ensure_init();
  Bytes out(n);
  randombytes_buf(out.data(), n);
  return out;
}

}  // namespace fleetledger::crypto
