#include <doctest.h>

#include "fleetledger/error.hpp"
#include "fleetledger/peer.hpp"
#include "net_fixture.hpp"

using namespace fleetledger;
using fixtures::TestNet;

namespace {

Invocation create_path(const std::string& robot, int seq, double x = 1.0) {
  return {"path", "CreateAsset", {robot, std::to_string(seq), contracts::format_number(x), "2", "0", "0.5", "1000", "Org1"}};
}

Proposal proposal_for(TestNet& t, const Invocation& inv, std::uint8_t nonce_byte = 1) {
  return make_proposal(t.net->gateway_identity(), "mychannel", inv.chaincode, inv.function, inv.args,
                       Bytes(16, nonce_byte));
}

}  // namespace

TEST_CASE("endorsers at the same height produce identical rwsets") {
  TestNet t;
  auto p = proposal_for(t, create_path("ground", 1));
  auto r1 = t.net->peer("peer0.org1").endorse(p);
  auto r2 = t.net->peer("peer0.org2").endorse(p);
  REQUIRE(r1.ok);
  REQUIRE(r2.ok);
  CHECK(r1.rwset == r2.rwset);
  CHECK(r1.tx_id == r2.tx_id);
  CHECK(r1.endorser_signature != r2.endorser_signature);
  // Simulation never touches the committed state.
  CHECK(t.net->peer("peer0.org1").ledger("mychannel").state().size() == 0);
}

TEST_CASE("assembling diverging responses is an error") {
  TestNet t;
  auto p = proposal_for(t, create_path("ground", 1));
  auto r1 = t.net->peer("peer0.org1").endorse(p);
  auto r2 = t.net->peer("peer0.org2").endorse(p);
  r2.rwset.writes[0].value.push_back('!');
  try {
    assemble_transaction(p, {r1, r2}, t.net->gateway_identity(), t.ex.now());
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::endorsement_divergence);
  }
}

TEST_CASE("endorse rejects bad proposals") {
  TestNet t;
  auto& peer = t.net->peer("peer0.org1");
  auto p = proposal_for(t, create_path("ground", 1));
  p.args[1] = "2";  // signature no longer covers the args
  CHECK_THROWS_AS(peer.endorse(p), Error);

  auto unknown = proposal_for(t, {"nope", "Fn", {}});
  try {
    peer.endorse(unknown);
    FAIL("expected unknown chaincode");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::unknown_chaincode);
  }

  auto other_ca = CertificateAuthority::create("Org7");
  auto outsider = other_ca.issue("x", Role::client);
  auto foreign = make_proposal(outsider, "mychannel", "path", "ReadAllAssets", {}, Bytes(16, 3));
  try {
    peer.endorse(foreign);
    FAIL("expected not a member");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::not_a_member);
  }
}

TEST_CASE("commit events and identical state on every peer") {
  TestNet t;
  std::vector<CommitEvent> events;
  t.net->peer("peer0.org2").on_commit("mychannel", [&](const CommitEvent& ev) { events.push_back(ev); });
  auto out = t.submit(create_path("ground", 1));
  CHECK(out.ordered);
  REQUIRE(out.code);
  CHECK(*out.code == ValidationCode::valid);
  CHECK(out.block_no == 1);
  REQUIRE(events.size() == 1);
  CHECK(events[0].tx_id == out.tx_id);
  const auto& s1 = t.net->peer("peer0.org1").ledger("mychannel").state();
  const auto& s2 = t.net->peer("peer0.org2").ledger("mychannel").state();
  CHECK(s1.size() == 1);
  CHECK(s1.dump() == s2.dump());
}

TEST_CASE("contract failures never reach the orderer") {
  TestNet t;
  const auto height = t.net->orderer().height("mychannel");
  auto out = t.submit({"path", "ReadAsset", {"path~ghost~000001"}});
  CHECK_FALSE(out.ordered);
  CHECK(out.error.find("not found") != std::string::npos);
  t.ex.run_until_idle();
  CHECK(t.net->orderer().height("mychannel") == height);
}

TEST_CASE("same asset raced in one block: one valid, one conflict") {
  TestNet t;
  std::vector<SubmitOutcome> outs;
  t.client->submit(create_path("ground", 1, 1.0), [&](const SubmitOutcome& o) { outs.push_back(o); });
  t.client->submit(create_path("ground", 1, 2.0), [&](const SubmitOutcome& o) { outs.push_back(o); });
  t.ex.run_until_idle();
  REQUIRE(outs.size() == 2);
  CHECK(outs[0].block_no == outs[1].block_no);
  int valid = 0, conflict = 0;
  for (const auto& o : outs) {
    valid += o.code == ValidationCode::valid;
    conflict += o.code == ValidationCode::mvcc_read_conflict;
  }
  CHECK(valid == 1);
  CHECK(conflict == 1);
  // Next block: the contract itself refuses.
  auto again = t.submit(create_path("ground", 1, 3.0));
  CHECK_FALSE(again.ordered);
  CHECK(again.error.find("already exists") != std::string::npos);
}

TEST_CASE("a tampered block halts the peer") {
  TestNet t;
  t.submit(create_path("ground", 1));
  auto& peer = t.net->peer("peer0.org1");
  std::string halted_on;
  peer.on_halt([&](const std::string& ch, const std::string&) { halted_on = ch; });
  Block forged = t.net->orderer().blocks("mychannel").back();
  forged.header.number = peer.ledger("mychannel").height();
  peer.process_block("mychannel", forged);
  CHECK(peer.halted("mychannel"));
  CHECK(halted_on == "mychannel");
  CHECK_FALSE(t.net->peer("peer0.org2").halted("mychannel"));
}

TEST_CASE("commit event encoding") {
  CommitEvent ev{"mychannel", 4, Hash{}, ValidationCode::mvcc_read_conflict, Timestamp{99}};
  ev.tx_id[0] = 7;
  Encoder e;
  ev.encode(e);
  Decoder d(e.data());
  CHECK(CommitEvent::decode(d) == ev);
}
