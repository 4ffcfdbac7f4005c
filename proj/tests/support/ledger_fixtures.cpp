#include "ledger_fixtures.hpp"

#include "fleetledger/codec.hpp"

namespace fixtures {

TestOrgs::TestOrgs()
    : org1(CertificateAuthority::create("Org1")),
      org2(CertificateAuthority::create("Org2")),
      orderer_org(CertificateAuthority::create("OrdererOrg")) {
  peer1 = org1.issue("peer0.org1", Role::peer);
  peer2 = org2.issue("peer0.org2", Role::peer);
  client1 = org1.issue("client.org1", Role::client);
  orderer = orderer_org.issue("orderer", Role::orderer);
  roots = {{"Org1", org1.root_public_key()}, {"Org2", org2.root_public_key()}};
  policy.member_roots = roots;
  policy.chaincodes.emplace("cc", majority_of(2));
}

Transaction make_tx(const TestOrgs& orgs, const TxSpec& spec, const Identity& creator, std::uint64_t nonce) {
  Transaction tx;
  tx.channel = spec.channel;
  tx.chaincode = spec.chaincode;
  tx.function = "Invoke";
  tx.args = {"n" + std::to_string(nonce)};
  tx.creator = creator.certificate();
  Encoder e;
  e.u64(nonce);
  tx.nonce = e.data();
  tx.rwset.reads = spec.reads;
  tx.rwset.writes = spec.writes;
  tx.tx_id = tx.compute_id();
  auto endorsers = spec.endorsers;
  if (endorsers.empty()) endorsers = {&orgs.peer1, &orgs.peer2};
  for (const auto* peer : endorsers) {
    tx.endorsements.push_back(Endorsement{peer->org_id(), peer->certificate(), peer->sign(tx.endorsement_payload())});
  }
  tx.client_signature = creator.sign(tx.signed_body());
  return tx;
}

std::vector<Block> make_chain(const TestOrgs& orgs, const std::vector<std::vector<Transaction>>& batches) {
  std::vector<Block> chain;
  chain.push_back(make_genesis_block("ch", to_bytes("config"), orgs.orderer, Timestamp{0}));
  for (std::size_t i = 0; i < batches.size(); ++i) {
    Batch batch{batches[i], CutReason::timeout, Timestamp(static_cast<std::int64_t>(i + 1))};
    chain.push_back(assemble_block(&chain.back(), std::move(batch)));
  }
  return chain;
}

WriteItem put(std::string key, std::string value) { return WriteItem{std::move(key), to_bytes(value), false}; }

}  // namespace fixtures
