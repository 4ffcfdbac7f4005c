#pragma once

// Canonical encoding shared by hashing, signing, block files and the wire
// protocol. Integers are 8-byte big-endian, byte strings carry an 8-byte
// big-endian length prefix, lists carry an 8-byte count prefix.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fleetledger/bytes.hpp"
#include "fleetledger/error.hpp"

namespace fleetledger {

class Encoder {
 public:
  Encoder& u64(std::uint64_t v);
  Encoder& i64(std::int64_t v) { return u64(static_cast<std::uint64_t>(v)); }
  Encoder& boolean(bool v) { return u64(v ? 1 : 0); }
  /// IEEE-754 bit pattern as an 8-byte integer.
  Encoder& f64(double v);
  Encoder& bytes(ByteView v);
  Encoder& str(std::string_view v);
  Encoder& fixed(ByteView v);  // no length prefix
  Encoder& hash(const Hash& h) { return fixed(ByteView(h.data(), h.size())); }
  Encoder& count(std::size_t n) { return u64(n); }
  Encoder& raw_u8(std::uint8_t v);

  template <class T, class F>
  Encoder& list(const std::vector<T>& items, F&& each) {
    count(items.size());
    for (const auto& item : items) each(*this, item);
    return *this;
  }

  Encoder& str_list(const std::vector<std::string>& items);

  const Bytes& data() const& { return out_; }
  Bytes take() && { return std::move(out_); }
  std::size_t size() const { return out_.size(); }

 private:
  Bytes out_;
};

/// Reads what Encoder writes; every malformed input throws Error(decode_error).
class Decoder {
 public:
  explicit Decoder(ByteView in) : in_(in) {}

  std::uint64_t u64();
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  bool boolean();
  double f64();
  Bytes bytes();
  std::string str();
  Bytes fixed(std::size_t n);
  Hash hash();
  std::size_t count();
  std::uint8_t raw_u8();
  std::vector<std::string> str_list();

  template <class F>
  auto list(F&& each) -> std::vector<decltype(each(*this))> {
    std::vector<decltype(each(*this))> out;
    const auto n = count();
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(each(*this));
    return out;
  }

  bool done() const { return pos_ == in_.size(); }
  std::size_t remaining() const { return in_.size() - pos_; }
  std::size_t position() const { return pos_; }
  /// Throws unless every byte was consumed.
  void expect_done() const;

 private:
  void need(std::size_t n) const;

  ByteView in_;
  std::size_t pos_ = 0;
};

void put_u32_be(Bytes& out, std::uint32_t v);
std::uint32_t get_u32_be(const std::uint8_t* p);

}  // namespace fleetledger
