#include "medledger/bench.hpp"

#include <chrono>
#include <cstdio>

namespace medledger {

BenchConfig bench_preset(ConsensusMode mode) {
    BenchConfig c;
    c.mode = mode;
    switch (mode) {
        case ConsensusMode::PoW: c.block_interval_ms = 1000; break;
        case ConsensusMode::PoS: c.block_interval_ms = 200; break;
        case ConsensusMode::DPoS: c.block_interval_ms = 50; break;
    }
    return c;
}

BenchReport bench_run(const BenchConfig& config) {
    auto start = std::chrono::steady_clock::now();
    if (config.duration_ms == 0) throw SimError("duration_ms must be positive");

    SimConfig sc;
    sc.node_count = config.node_count;
    sc.seed = config.seed;
    sc.mode = config.mode;
    sc.pow_difficulty_bits = config.pow_difficulty_bits;
    sc.pow_hashes_per_ms = config.pow_hashes_per_ms;
    sc.block_interval_ms = config.block_interval_ms;
    sc.max_block_txs = config.max_block_txs;
    sc.record_events = false;
    Simulation sim(sc);

    // Self-registrations from fresh deterministic keys: each is valid on its own.
    std::uint64_t offered = config.tx_load_tps * config.duration_ms / 1000;
    for (std::uint64_t i = 0; i < offered; ++i) {
        auto at = i * 1000 / config.tx_load_tps;
        Writer w;
        w.str("medledger.bench.client").u64(config.seed).u64(i);
        auto key = KeyPair::generate(sha256(w.data()).view());
        cmd::RegisterUser reg{Role::Patient, key.public_key(), Profile{"bench-" + std::to_string(i), "", ""}};
        sim.schedule_tx(at, i % config.node_count,
                        build_transaction(key, 0, Command{reg}, sc.epoch_ms + static_cast<std::int64_t>(at)));
    }

    sim.run_until(config.duration_ms);
    sim.set_production(false);
    sim.run_until(config.duration_ms + config.drain_ms);

    BenchReport r;
    r.mode = config.mode;
    r.node_count = config.node_count;
    r.duration_ms = config.duration_ms;
    r.offered_txs = offered;
    auto report = sim.convergence_report();
    r.all_honest_agree = report.all_honest_agree;
    const auto& chain = sim.node(0).chain();
    r.blocks = chain.height();
    for (const auto& b : chain.blocks())
        if (b.header.height > 0) r.committed_txs += b.transactions.size();
    r.achieved_tps = static_cast<double>(r.committed_txs) * 1000.0 / static_cast<double>(config.duration_ms);
    if (r.blocks > 0)
        r.mean_block_interval_ms = static_cast<double>(chain.tip().header.timestamp - chain.at(0).header.timestamp) /
                                   static_cast<double>(r.blocks);
    r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return r;
}

namespace {

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

}  // namespace

std::string bench_table(const std::vector<BenchReport>& reports) {
    std::string out;
    char line[256];
    std::snprintf(line, sizeof line, "%-5s %5s %9s %9s %9s %7s %10s %14s %6s\n", "mode", "nodes", "duration", "offered",
                  "committed", "blocks", "tps", "interval_ms", "agree");
    out += line;
    for (const auto& r : reports) {
        std::snprintf(line, sizeof line, "%-5s %5zu %9llu %9llu %9llu %7llu %10.2f %14.2f %6s\n",
                      std::string(to_string(r.mode)).c_str(), r.node_count,
                      static_cast<unsigned long long>(r.duration_ms), static_cast<unsigned long long>(r.offered_txs),
                      static_cast<unsigned long long>(r.committed_txs), static_cast<unsigned long long>(r.blocks),
                      r.achieved_tps, r.mean_block_interval_ms, r.all_honest_agree ? "yes" : "no");
        out += line;
    }
    return out;
}

std::string bench_csv(const std::vector<BenchReport>& reports) {
    std::string out = "mode,nodes,duration_ms,offered_txs,committed_txs,blocks,achieved_tps,mean_block_interval_ms,"
                      "all_honest_agree\n";
    for (const auto& r : reports) {
        out += std::string(to_string(r.mode)) + "," + std::to_string(r.node_count) + "," +
               std::to_string(r.duration_ms) + "," + std::to_string(r.offered_txs) + "," +
               std::to_string(r.committed_txs) + "," + std::to_string(r.blocks) + "," + fmt("%.2f", r.achieved_tps) +
               "," + fmt("%.2f", r.mean_block_interval_ms) + "," + (r.all_honest_agree ? "true" : "false") + "\n";
    }
    return out;
}

}  // namespace medledger
