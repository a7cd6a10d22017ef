// medledger: operator CLI. Exit codes: 0 success, 1 runtime failure, 2 usage.

#include <CLI11.hpp>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <thread>

#include "medledger/bench.hpp"
#include "medledger/config.hpp"
#include "medledger/debug_json.hpp"
#include "medledger/export.hpp"
#include "medledger/node.hpp"
#include "medledger/service.hpp"
#include "medledger/storage.hpp"

namespace fs = std::filesystem;
using namespace medledger;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

bool is_hex(std::string_view s) {
    return !s.empty() && s.size() % 2 == 0 &&
           s.find_first_not_of("0123456789abcdefABCDEF") == std::string_view::npos;
}

// Hex seeds are used as bytes; anything else as its UTF-8 text.
Bytes seed_bytes(const std::string& seed) {
    Bytes b = is_hex(seed) ? from_hex(seed) : Bytes(seed.begin(), seed.end());
    if (b.size() < 32) throw UsageError("--seed needs at least 32 bytes (64 hex digits or 32 characters)");
    return b;
}

// --data-dir wins; otherwise the data_dir of --config (with env overrides).
fs::path resolve_data_dir(const std::string& data_dir, const std::string& config) {
    if (!data_dir.empty()) return data_dir;
    if (config.empty()) throw UsageError("one of --data-dir or --config is required");
    auto c = load_node_config(config);
    apply_env_overrides(c);
    return c.data_dir;
}

void print_json(const json& j, bool pretty = false) { std::cout << (pretty ? j.dump(2) : j.dump()) << "\n"; }

// ---- keygen ----

struct KeygenArgs {
    std::string seed;
    std::string out = "node";
    bool json = false;
};

int cmd_keygen(const KeygenArgs& a) {
    fs::path base = a.out;
    for (auto ext : {".key", ".pub"}) {
        fs::path p = base;
        p += ext;
        if (fs::exists(p)) throw UsageError(p.string() + " already exists; refusing to overwrite");
    }
    std::optional<Bytes> seed;
    if (!a.seed.empty()) seed = seed_bytes(a.seed);
    auto key = seed ? KeyPair::generate(ByteView(*seed)) : KeyPair::generate();
    write_key_files(base, key);
    if (a.json)
        print_json({{"address", key.address().str()},
                    {"public_key", key.public_key().hex()},
                    {"key_file", base.string() + ".key"},
                    {"public_file", base.string() + ".pub"}});
    else
        std::cout << key.address().str() << "\n";
    return kOk;
}

// ---- init ----

struct InitArgs {
    std::string genesis;
    std::string data_dir;
    std::string config;
    std::string preset;
    bool json = false;
};

int cmd_init(const InitArgs& a) {
    auto dir = resolve_data_dir(a.data_dir, a.config);
    auto spec = load_genesis_spec(a.genesis, a.preset.empty() ? std::nullopt : std::optional(a.preset));
    if (spec.timestamp == 0) spec.timestamp = system_clock_ms();
    auto genesis = LedgerNode::initialize(dir, spec);
    if (a.json)
        print_json({{"data_dir", dir.string()},
                    {"genesis_hash", genesis.block_hash.hex()},
                    {"chain_id", spec.chain_id},
                    {"admin", spec.admin.str()},
                    {"mode", to_string(spec.consensus.mode)}});
    else
        std::cout << "initialized " << dir.string() << " genesis " << genesis.block_hash.hex() << "\n";
    return kOk;
}

// ---- run ----

struct RunArgs {
    std::string config;
    std::string data_dir;
    int port = -1;
};

int cmd_run(const RunArgs& a) {
    auto c = load_node_config(a.config);
    apply_env_overrides(c);
    if (!a.data_dir.empty()) c.data_dir = a.data_dir;
    if (a.port >= 0) c.port = static_cast<std::uint16_t>(a.port);

    // Threads spawned below inherit the mask, so only sigwait sees these.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGTERM);
    sigaddset(&signals, SIGINT);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    NodeOptions opts;
    opts.data_dir = c.data_dir;
    opts.producer = load_key_file(c.key_file);
    opts.snapshot_every = c.snapshot_every;
    opts.max_block_txs = c.max_block_txs;
    LedgerNode node(std::move(opts));

    ServiceOptions so;
    so.session_ttl_ms = c.session_ttl_s * 1000;
    so.challenge_ttl_ms = c.challenge_ttl_s * 1000;
    ApiService service(node, so);
    int port = service.bind(c.bind, c.port);
    if (port < 0) {
        std::cerr << "error: cannot bind " << c.bind << ":" << c.port << " (port in use?)\n";
        return kFailure;
    }
    node.start();
    std::thread server([&] { service.serve(); });
    std::cout << "listening on " << c.bind << ":" << port << " height " << node.height() << std::endl;

    int sig = 0;
    sigwait(&signals, &sig);
    service.stop();
    server.join();
    node.stop();
    std::cout << "stopped at height " << node.height() << std::endl;
    if (auto fatal = node.fatal_error()) {
        std::cerr << "error: " << *fatal << "\n";
        return kFailure;
    }
    return kOk;
}

// ---- bench ----

struct BenchArgs {
    std::string mode = "all";
    std::uint64_t duration_ms = 30'000;
    std::uint64_t seed = 1;
    std::size_t nodes = 4;
    std::uint64_t load_tps = 500;
    bool csv = false;
    bool json = false;
};

int cmd_bench(const BenchArgs& a) {
    std::vector<ConsensusMode> modes;
    if (a.mode == "all")
        modes = {ConsensusMode::PoW, ConsensusMode::PoS, ConsensusMode::DPoS};
    else
        modes = {parse_consensus_mode(a.mode)};
    std::vector<BenchReport> reports;
    for (auto m : modes) {
        auto cfg = bench_preset(m);
        cfg.duration_ms = a.duration_ms;
        cfg.seed = a.seed;
        cfg.node_count = a.nodes;
        cfg.tx_load_tps = a.load_tps;
        reports.push_back(bench_run(cfg));
    }
    if (a.json) {
        json arr = json::array();
        for (const auto& r : reports)
            arr.push_back({{"mode", to_string(r.mode)},
                           {"nodes", r.node_count},
                           {"duration_ms", r.duration_ms},
                           {"offered_txs", r.offered_txs},
                           {"committed_txs", r.committed_txs},
                           {"blocks", r.blocks},
                           {"tps", r.achieved_tps},
                           {"mean_block_interval_ms", r.mean_block_interval_ms},
                           {"all_honest_agree", r.all_honest_agree},
                           {"wall_ms", r.wall_ms}});
        print_json(arr);
    } else {
        std::cout << (a.csv ? bench_csv(reports) : bench_table(reports));
    }
    return kOk;
}

// ---- sim ----

struct SimArgs {
    std::string scenario;
    std::string events;
    bool json = false;
};

int cmd_sim(const SimArgs& a) {
    auto scenario = load_scenario(a.scenario);
    auto result = run_scenario(scenario);
    const auto& r = result.report;
    if (!a.events.empty()) {
        std::ofstream out(a.events);
        for (const auto& line : result.event_log) out << line << "\n";
        if (!out) throw std::runtime_error("cannot write " + a.events);
    }
    if (a.json) {
        json nodes = json::array();
        for (const auto& n : r.nodes)
            nodes.push_back({{"node", n.node},
                             {"fault", n.fault ? json(to_string(*n.fault)) : json(nullptr)},
                             {"height", n.height},
                             {"tip", n.tip.hex()},
                             {"mempool", n.mempool_size}});
        print_json({{"scenario", scenario.name},
                    {"time_ms", r.time_ms},
                    {"all_honest_agree", r.all_honest_agree},
                    {"honest_producers_only", result.honest_producers_only},
                    {"nodes", nodes}});
    } else {
        std::cout << "scenario " << scenario.name << " at " << r.time_ms << " ms\n";
        std::printf("%-6s %-13s %8s  %-16s %8s\n", "node", "fault", "height", "tip", "mempool");
        for (const auto& n : r.nodes)
            std::printf("%-6zu %-13s %8llu  %-16s %8zu\n", n.node,
                        n.fault ? std::string(to_string(*n.fault)).c_str() : "-",
                        static_cast<unsigned long long>(n.height), n.tip.hex().substr(0, 16).c_str(), n.mempool_size);
        std::cout << "all_honest_agree " << (r.all_honest_agree ? "true" : "false") << "\n";
        std::cout << "honest_producers_only " << (result.honest_producers_only ? "true" : "false") << "\n";
    }
    return r.all_honest_agree ? kOk : kFailure;
}

// ---- inspect ----

struct InspectArgs {
    std::string data_dir;
    std::string config;
    std::optional<std::uint64_t> height;
    bool json = false;
};

int cmd_inspect(const InspectArgs& a) {
    auto dir = resolve_data_dir(a.data_dir, a.config);
    auto log = dir / "chain.log";
    if (!fs::exists(log)) throw std::runtime_error(dir.string() + " holds no chain");
    auto scan = scan_chain_log(log);
    if (scan.blocks.empty()) throw std::runtime_error(dir.string() + " holds no chain");
    auto tip = scan.blocks.size() - 1;
    if (!a.height) {
        json j = {{"height", tip},
                  {"tip", scan.blocks.back().block_hash.hex()},
                  {"genesis", scan.blocks.front().block_hash.hex()},
                  {"damaged_tail", scan.dropped_tail}};
        if (a.json)
            print_json(j);
        else
            std::cout << "height " << tip << "\ntip " << j["tip"].get<std::string>() << "\ngenesis "
                      << j["genesis"].get<std::string>() << "\n";
        return kOk;
    }
    if (*a.height > tip)
        throw std::runtime_error("height " + std::to_string(*a.height) + " out of range (tip " + std::to_string(tip) +
                                 ")");
    print_json(block_json(scan.blocks[*a.height]), !a.json);
    return kOk;
}

// ---- export ----

struct ExportArgs {
    std::string data_dir;
    std::string config;
    std::string dataset;
    std::string format = "csv";
    std::string key;
    std::string out;
};

int cmd_export(const ExportArgs& a) {
    auto dataset = parse_dataset(a.dataset);
    auto format = parse_format(a.format);
    if (!dataset) throw UsageError("unknown dataset " + a.dataset);
    if (!format) throw UsageError("unknown format " + a.format);
    auto dir = resolve_data_dir(a.data_dir, a.config);
    auto key = load_key_file(a.key);
    ChainStore store(dir);
    if (!store.has_chain()) throw std::runtime_error(dir.string() + " holds no chain");
    auto rec = store.recover();
    auto out = export_data(rec.state, key.address(), *dataset, *format);
    if (!out.ok()) {
        std::cerr << "error: export denied: " << to_string(out.reason()) << "\n";
        return kFailure;
    }
    if (a.out.empty()) {
        std::cout << out.value();
    } else {
        std::ofstream f(a.out, std::ios::binary);
        f << out.value();
        if (!f) throw std::runtime_error("cannot write " + a.out);
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"medledger: permissioned health-record ledger node and tools"};
    app.require_subcommand(1);

    KeygenArgs keygen;
    auto* k = app.add_subcommand("keygen", "Generate an Ed25519 key pair (<out>.key, <out>.pub)");
    k->add_option("--seed", keygen.seed, "Deterministic seed: hex, or text of at least 32 characters");
    k->add_option("--out", keygen.out, "Output path without extension")->capture_default_str();
    k->add_flag("--json", keygen.json, "Machine-readable output");

    InitArgs init;
    auto* i = app.add_subcommand("init", "Write the genesis block into an empty data directory");
    i->add_option("--genesis", init.genesis, "Genesis file")->required()->check(CLI::ExistingFile);
    i->add_option("--data-dir", init.data_dir, "Data directory");
    i->add_option("--config", init.config, "Node config file (for data_dir)");
    i->add_option("--preset", init.preset, "Consensus preset overriding the genesis file")
        ->check(CLI::IsMember({"pow", "pos", "dpos"}, CLI::ignore_case));
    i->add_flag("--json", init.json, "Machine-readable output");

    RunArgs run;
    auto* r = app.add_subcommand("run", "Run a node: block production plus the HTTP API");
    r->add_option("--config", run.config, "Node config file")->required()->check(CLI::ExistingFile);
    r->add_option("--data-dir", run.data_dir, "Override data_dir");
    r->add_option("--port", run.port, "Override port (0 picks a free one)")->check(CLI::Range(0, 65535));

    BenchArgs bench;
    auto* b = app.add_subcommand("bench", "Compare consensus modes on a simulated network");
    b->add_option("--mode", bench.mode, "pow | pos | dpos | all")
        ->check(CLI::IsMember({"pow", "pos", "dpos", "all"}, CLI::ignore_case))
        ->capture_default_str();
    b->add_option("--duration", bench.duration_ms, "Simulated milliseconds")->capture_default_str();
    b->add_option("--seed", bench.seed, "Simulation seed")->capture_default_str();
    b->add_option("--nodes", bench.nodes, "Node count")->capture_default_str();
    b->add_option("--load", bench.load_tps, "Offered transactions per second")->capture_default_str();
    b->add_flag("--csv", bench.csv, "CSV instead of a table");
    b->add_flag("--json", bench.json, "Machine-readable output");

    SimArgs sim;
    auto* s = app.add_subcommand("sim", "Run a network scenario and print the convergence report");
    s->add_option("--scenario", sim.scenario, "Scenario file")->required()->check(CLI::ExistingFile);
    s->add_option("--events", sim.events, "Write the event log (JSON lines) here");
    s->add_flag("--json", sim.json, "Machine-readable output");

    InspectArgs inspect;
    auto* n = app.add_subcommand("inspect", "Show the chain tip or dump one block");
    n->add_option("--data-dir", inspect.data_dir, "Data directory");
    n->add_option("--config", inspect.config, "Node config file (for data_dir)");
    n->add_option("--height", inspect.height, "Block height to dump");
    n->add_flag("--json", inspect.json, "Compact JSON");

    ExportArgs exp;
    auto* e = app.add_subcommand("export", "Export a dataset with an admin key");
    e->add_option("--data-dir", exp.data_dir, "Data directory");
    e->add_option("--config", exp.config, "Node config file (for data_dir)");
    e->add_option("--dataset", exp.dataset, "users | medications | lab_parameters | audit")->required();
    e->add_option("--format", exp.format, "csv | xml | txt")->capture_default_str();
    e->add_option("--key", exp.key, "Caller key file")->required()->check(CLI::ExistingFile);
    e->add_option("--out", exp.out, "Write to a file instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        int code = app.exit(err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*k) return cmd_keygen(keygen);
        if (*i) return cmd_init(init);
        if (*r) return cmd_run(run);
        if (*b) return cmd_bench(bench);
        if (*s) return cmd_sim(sim);
        if (*n) return cmd_inspect(inspect);
        if (*e) return cmd_export(exp);
    } catch (const UsageError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kUsage;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kFailure;
    }
    return kUsage;
}
