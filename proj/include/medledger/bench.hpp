#pragma once

// Throughput and block-interval measurement for each consensus mode on a
// fault-free simulated network.

#include <cstdint>
#include <string>
#include <vector>

#include "medledger/network_sim.hpp"

namespace medledger {

struct BenchConfig {
    ConsensusMode mode = ConsensusMode::DPoS;
    std::uint32_t pow_difficulty_bits = 16;
    double pow_hashes_per_ms = 20.0;
    std::uint64_t block_interval_ms = 50;
    std::size_t max_block_txs = 20;
    std::uint64_t tx_load_tps = 500;  // offered load, spread round-robin over nodes
    std::size_t node_count = 4;
    std::uint64_t duration_ms = 30'000;
    std::uint64_t drain_ms = 2'000;  // delivery-only time after production stops
    std::uint64_t seed = 1;
};

// PoW 16 bits at 20 hashes/ms per node; PoS 200 ms slots; DPoS 50 ms slots.
BenchConfig bench_preset(ConsensusMode mode);

struct BenchReport {
    ConsensusMode mode = ConsensusMode::DPoS;
    std::size_t node_count = 0;
    std::uint64_t duration_ms = 0;
    std::uint64_t offered_txs = 0;
    std::uint64_t committed_txs = 0;
    std::uint64_t blocks = 0;
    double achieved_tps = 0;
    double mean_block_interval_ms = 0;
    bool all_honest_agree = false;
    double wall_ms = 0;
};

// Throws SimError on an invalid configuration.
BenchReport bench_run(const BenchConfig& config);

std::string bench_table(const std::vector<BenchReport>& reports);
std::string bench_csv(const std::vector<BenchReport>& reports);

}  // namespace medledger
