#pragma once

// Random multi-block workloads checked against a sequential model: a
// transaction simulated at the start of its block commits iff no earlier
// committed transaction in that block changed any key it read.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ledger_fixtures.hpp"

namespace oracle {

struct ScenarioReport {
  bool ok = true;
  std::string detail;
  std::size_t transactions = 0;
  std::size_t conflicts = 0;
};

ScenarioReport run_mvcc_scenario(const fixtures::TestOrgs& orgs, std::uint64_t seed);

/// Flips bytes of stored block files at random and checks that each
/// mutation is reported at the mutated block. Returns the number missed.
std::size_t undetected_mutations(const std::vector<fleetledger::Bytes>& files, std::size_t mutations,
                                 std::uint64_t seed);

}  // namespace oracle
