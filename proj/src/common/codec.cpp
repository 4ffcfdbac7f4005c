#include "fleetledger/codec.hpp"

#include <bit>
#include <cstring>

namespace fleetledger {

Encoder& Encoder::u64(std::uint64_t v) {
  for (int shift = 56; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
  return *this;
}

Encoder& Encoder::f64(double v) { return u64(std::bit_cast<std::uint64_t>(v)); }

Encoder& Encoder::bytes(ByteView v) {
  u64(v.size());
  return fixed(v);
}

Encoder& Encoder::str(std::string_view v) {
  return bytes(ByteView(reinterpret_cast<const std::uint8_t*>(v.data()), v.size()));
}

Encoder& Encoder::fixed(ByteView v) {
  out_.insert(out_.end(), v.begin(), v.end());
  return *this;
}

Encoder& Encoder::raw_u8(std::uint8_t v) {
  out_.push_back(v);
  return *this;
}

Encoder& Encoder::str_list(const std::vector<std::string>& items) {
  return list(items, [](Encoder& e, const std::string& s) { e.str(s); });
}

void Decoder::need(std::size_t n) const {
  if (remaining() < n) {
    throw Error(ErrorCode::decode_error, "truncated input at offset " + std::to_string(pos_));
  }
}

std::uint64_t Decoder::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = v << 8 | in_[pos_ + i];
  pos_ += 8;
  return v;
}

bool Decoder::boolean() {
  const auto v = u64();
  if (v > 1) throw Error(ErrorCode::decode_error, "boolean out of range");
  return v == 1;
}

double Decoder::f64() { return std::bit_cast<double>(u64()); }

Bytes Decoder::bytes() {
  const auto n = u64();
  if (n > remaining()) throw Error(ErrorCode::decode_error, "length prefix exceeds input");
  return fixed(static_cast<std::size_t>(n));
}

std::string Decoder::str() {
  const auto b = bytes();
  return std::string(b.begin(), b.end());
}

Bytes Decoder::fixed(std::size_t n) {
  need(n);
  Bytes out(in_.begin() + pos_, in_.begin() + pos_ + n);
  pos_ += n;
  return out;
}

Hash Decoder::hash() {
  need(32);
  Hash h{};
  std::memcpy(h.data(), in_.data() + pos_, 32);
  pos_ += 32;
  return h;
}

std::size_t Decoder::count() {
  const auto n = u64();
  // Every encoded element takes at least one byte.
  if (n > remaining()) throw Error(ErrorCode::decode_error, "count exceeds input");
  return static_cast<std::size_t>(n);
}

std::uint8_t Decoder::raw_u8() {
  need(1);
  return in_[pos_++];
}

std::vector<std::string> Decoder::str_list() {
  return list([](Decoder& d) { return d.str(); });
}

void Decoder::expect_done() const {
  if (!done()) throw Error(ErrorCode::decode_error, "trailing bytes after record");
}

void put_u32_be(Bytes& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::uint32_t get_u32_be(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) << 24 | static_cast<std::uint32_t>(p[1]) << 16 |
         static_cast<std::uint32_t>(p[2]) << 8 | static_cast<std::uint32_t>(p[3]);
}

}  // namespace fleetledger
