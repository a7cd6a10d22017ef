#pragma once

// INI-style configuration files: node settings, genesis specs, key files
// and simulation scenarios. Errors name the file and line.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "medledger/ledger.hpp"
#include "medledger/network_sim.hpp"

namespace medledger {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct NodeConfig {
    std::filesystem::path data_dir = "data";
    std::string bind = "127.0.0.1";
    std::uint16_t port = 8080;
    std::filesystem::path key_file = "node.key";  // block producer key
    std::uint64_t snapshot_every = 10;
    std::size_t max_block_txs = 100;
    std::uint64_t session_ttl_s = 1800;
    std::uint64_t challenge_ttl_s = 120;
};

// [node] section. Relative paths resolve against the config file's directory.
NodeConfig load_node_config(const std::filesystem::path& file);
// MEDLEDGER_PORT and MEDLEDGER_DATA_DIR.
void apply_env_overrides(NodeConfig& config);

// Consensus parameters for a named preset (pow | pos | dpos).
ConsensusConfig consensus_preset(ConsensusMode mode);

// [genesis], [admin], [consensus], [system]. `preset` (or the
// MEDLEDGER_CONSENSUS_PRESET variable when empty) replaces the mode and
// its timing parameters.
GenesisSpec load_genesis_spec(const std::filesystem::path& file, std::optional<std::string> preset = std::nullopt);

// Key files: `address`, `public_key`, `private_key` lines (hex).
void write_key_files(const std::filesystem::path& base, const KeyPair& key);  // base.key (0600) + base.pub
KeyPair load_key_file(const std::filesystem::path& file);

struct ScenarioStep {
    enum class Kind { Partition, Heal, Fault } kind = Kind::Heal;
    std::uint64_t at_ms = 0;
    std::vector<std::size_t> group_a, group_b;  // Partition
    std::size_t node = 0;                       // Fault
    FaultKind fault = FaultKind::Silent;
};

struct Scenario {
    std::string name;
    SimConfig sim;
    std::uint64_t txs = 0;
    std::uint64_t rate_tps = 50;
    std::uint64_t run_ms = 10'000;
    std::uint64_t drain_ms = 2'000;
    std::vector<ScenarioStep> steps;  // sorted by time
};

Scenario load_scenario(const std::filesystem::path& file);

struct ScenarioResult {
    ConvergenceReport report;
    std::vector<std::string> event_log;
    bool honest_producers_only = false;  // every non-genesis block on honest tips came from an honest node
};

ScenarioResult run_scenario(const Scenario& scenario);

}  // namespace medledger
