#include <algorithm>

#include "fleetledger/crypto.hpp"
#include "fleetledger/error.hpp"
#include "fleetledger/ledger.hpp"

namespace fleetledger {

std::string to_string(const Version& v) {
  return std::to_string(v.block_no) + "." + std::to_string(v.tx_index);
}

std::string_view to_string(ValidationCode code) {
  switch (code) {
    case ValidationCode::valid: return "VALID";
    case ValidationCode::mvcc_read_conflict: return "MVCC_READ_CONFLICT";
    case ValidationCode::endorsement_policy_failure: return "ENDORSEMENT_POLICY_FAILURE";
    case ValidationCode::bad_signature: return "BAD_SIGNATURE";
    case ValidationCode::duplicate_txid: return "DUPLICATE_TXID";
    case ValidationCode::unknown_chaincode: return "UNKNOWN_CHAINCODE";
    case ValidationCode::not_a_member: return "NOT_A_MEMBER";
  }
  return "UNKNOWN";
}

std::string_view to_string(CutReason reason) {
  switch (reason) {
    case CutReason::genesis: return "genesis";
    case CutReason::timeout: return "timeout";
    case CutReason::max_messages: return "max_messages";
    case CutReason::max_bytes: return "max_bytes";
  }
  return "unknown";
}

bool RwSet::well_formed() const {
  auto sorted_unique = [](const auto& items) {
    for (std::size_t i = 1; i < items.size(); ++i) {
      if (!(items[i - 1].key < items[i].key)) return false;
    }
    return true;
  };
  return sorted_unique(reads) && sorted_unique(writes);
}

void RwSet::encode(Encoder& e) const {
  e.list(reads, [](Encoder& enc, const ReadItem& r) {
    enc.str(r.key).boolean(r.version.has_value());
    if (r.version) enc.u64(r.version->block_no).u64(r.version->tx_index);
  });
  e.list(writes, [](Encoder& enc, const WriteItem& w) { enc.str(w.key).bytes(w.value).boolean(w.is_delete); });
}

RwSet RwSet::decode(Decoder& d) {
  RwSet rw;
  rw.reads = d.list([](Decoder& dec) {
    ReadItem r;
    r.key = dec.str();
    if (dec.boolean()) {
      Version v;
      v.block_no = dec.u64();
      const auto idx = dec.u64();
      if (idx > UINT32_MAX) throw Error(ErrorCode::decode_error, "tx index out of range");
      v.tx_index = static_cast<std::uint32_t>(idx);
      r.version = v;
    }
    return r;
  });
  rw.writes = d.list([](Decoder& dec) {
    WriteItem w;
    w.key = dec.str();
    w.value = dec.bytes();
    w.is_delete = dec.boolean();
    return w;
  });
  return rw;
}

Bytes RwSet::serialize() const {
  Encoder e;
  encode(e);
  return std::move(e).take();
}

Hash Transaction::compute_id() const {
  Encoder e;
  e.str(channel).str(chaincode).str(function).str_list(args);
  creator.encode(e);
  e.bytes(nonce);
  rwset.encode(e);
  return crypto::sha256(e.data());
}

Bytes Transaction::endorsement_payload(const Hash& tx_id, const RwSet& rwset, ByteView response_payload) {
  Encoder e;
  e.hash(tx_id);
  rwset.encode(e);
  e.bytes(response_payload);
  return std::move(e).take();
}

Bytes Transaction::endorsement_payload() const { return endorsement_payload(tx_id, rwset, response_payload); }

namespace {

void encode_body(Encoder& e, const Transaction& tx) {
  e.hash(tx.tx_id).str(tx.channel).str(tx.chaincode).str(tx.function).str_list(tx.args);
  tx.creator.encode(e);
  e.bytes(tx.nonce);
  tx.rwset.encode(e);
  e.bytes(tx.response_payload);
  e.list(tx.endorsements, [](Encoder& enc, const Endorsement& en) {
    enc.str(en.org_id);
    en.endorser.encode(enc);
    enc.bytes(en.signature);
  });
  e.i64(tx.submit_time.count());
}

}  // namespace

Bytes Transaction::signed_body() const {
  Encoder e;
  encode_body(e, *this);
  return std::move(e).take();
}

void Transaction::encode(Encoder& e) const {
  encode_body(e, *this);
  e.bytes(client_signature);
}

Transaction Transaction::decode(Decoder& d) {
  Transaction tx;
  tx.tx_id = d.hash();
  tx.channel = d.str();
  tx.chaincode = d.str();
  tx.function = d.str();
  tx.args = d.str_list();
  tx.creator = Certificate::decode(d);
  tx.nonce = d.bytes();
  tx.rwset = RwSet::decode(d);
  tx.response_payload = d.bytes();
  tx.endorsements = d.list([](Decoder& dec) {
    Endorsement en;
    en.org_id = dec.str();
    en.endorser = Certificate::decode(dec);
    en.signature = dec.bytes();
    return en;
  });
  tx.submit_time = Timestamp(d.i64());
  tx.client_signature = d.bytes();
  return tx;
}

Bytes Transaction::serialize() const {
  Encoder e;
  encode(e);
  return std::move(e).take();
}

Transaction Transaction::deserialize(ByteView bytes) {
  Decoder d(bytes);
  auto tx = decode(d);
  d.expect_done();
  return tx;
}

Hash BlockHeader::hash() const {
  Encoder e;
  e.u64(number).hash(prev_hash).hash(data_hash);
  return crypto::sha256(e.data());
}

Hash Block::compute_data_hash(const std::vector<Transaction>& txs) {
  Encoder e;
  for (const auto& tx : txs) tx.encode(e);
  return crypto::sha256(e.data());
}

void Block::encode(Encoder& e) const {
  e.u64(header.number).hash(header.prev_hash).hash(header.data_hash);
  e.list(transactions, [](Encoder& enc, const Transaction& tx) { tx.encode(enc); });
  e.list(validation_codes, [](Encoder& enc, ValidationCode c) { enc.u64(static_cast<std::uint64_t>(c)); });
  e.u64(static_cast<std::uint64_t>(cut_reason));
  e.i64(cut_time.count());
}

Block Block::decode(Decoder& d) {
  Block b;
  b.header.number = d.u64();
  b.header.prev_hash = d.hash();
  b.header.data_hash = d.hash();
  b.transactions = d.list([](Decoder& dec) { return Transaction::decode(dec); });
  b.validation_codes = d.list([](Decoder& dec) {
    const auto c = dec.u64();
    if (c > static_cast<std::uint64_t>(ValidationCode::not_a_member)) {
      throw Error(ErrorCode::decode_error, "bad validation code");
    }
    return static_cast<ValidationCode>(c);
  });
  const auto reason = d.u64();
  if (reason > static_cast<std::uint64_t>(CutReason::max_bytes)) {
    throw Error(ErrorCode::decode_error, "bad cut reason");
  }
  b.cut_reason = static_cast<CutReason>(reason);
  b.cut_time = Timestamp(d.i64());
  return b;
}

namespace {

constexpr std::uint8_t kBlockMagic[4] = {'F', 'L', 'B', 'K'};
constexpr std::uint8_t kBlockFormatVersion = 1;
constexpr std::size_t kBlockPreamble = 6;

}  // namespace

Bytes encode_block_file(const Block& block) {
  Encoder e;
  e.fixed(ByteView(kBlockMagic, 4)).raw_u8(kBlockFormatVersion).raw_u8(crypto::kHashSha256);
  block.encode(e);
  const auto digest = crypto::sha256(e.data());
  e.hash(digest);
  return std::move(e).take();
}

Block decode_block_file(ByteView bytes) {
  if (bytes.size() < kBlockPreamble + 32) throw Error(ErrorCode::decode_error, "block file too short");
  if (!std::equal(kBlockMagic, kBlockMagic + 4, bytes.begin())) {
    throw Error(ErrorCode::decode_error, "bad block file magic");
  }
  if (bytes[4] != kBlockFormatVersion) throw Error(ErrorCode::decode_error, "unsupported block format");
  if (bytes[5] != crypto::kHashSha256) throw Error(ErrorCode::decode_error, "unsupported hash algorithm");
  const auto body_end = bytes.size() - 32;
  const auto digest = crypto::sha256(bytes.first(body_end));
  if (!std::equal(digest.begin(), digest.end(), bytes.begin() + static_cast<std::ptrdiff_t>(body_end))) {
    throw Error(ErrorCode::chain_broken, "block file digest mismatch");
  }
  Decoder d(bytes.subspan(kBlockPreamble, body_end - kBlockPreamble));
  auto block = Block::decode(d);
  d.expect_done();
  return block;
}

}  // namespace fleetledger
