#pragma once

// JSON renderings of chain objects for inspection. Not a wire format.

#include <nlohmann/json.hpp>

#include "medledger/ledger.hpp"

namespace medledger {

nlohmann::json command_json(const Command& c);
// Includes the decoded command, or "undecodable" with the raw hex.
nlohmann::json transaction_json(const SignedTransaction& tx);
nlohmann::json consensus_json(const ConsensusConfig& c);
nlohmann::json block_json(const Block& b);

}  // namespace medledger
