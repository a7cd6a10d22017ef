#include "medledger/config.hpp"

#include <sys/stat.h>

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace medledger {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        auto pos = s.find(sep, start);
        auto part = trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (!part.empty()) out.push_back(part);
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

// A parsed INI file that remembers where each key was written.
class Ini {
public:
    explicit Ini(const fs::path& file) : file_(file) {
        std::ifstream in(file);
        if (!in) throw ConfigError(file.string() + ": cannot open file");
        std::string text, line;
        std::string section;
        int n = 0;
        while (std::getline(in, line)) {
            ++n;
            auto t = trim(line);
            if (!t.empty() && t[0] == '#') line = ";" + line;
            if (t.size() > 1 && t.front() == '[' && t.back() == ']') {
                section = trim(std::string_view(t).substr(1, t.size() - 2));
            } else if (!t.empty() && t[0] != '#' && t[0] != ';') {
                auto eq = t.find('=');
                if (eq != std::string::npos) lines_.emplace(section + "." + trim(t.substr(0, eq)), n);
            }
            text += line + "\n";
        }
        std::istringstream ss(text);
        try {
            pt::read_ini(ss, tree_);
        } catch (const pt::ini_parser_error& e) {
            throw ConfigError(file.string() + ":" + std::to_string(e.line()) + ": " + e.message());
        }
    }

    bool has_section(const std::string& s) const { return tree_.get_child_optional(s).has_value(); }

    std::optional<std::string> get(const std::string& key) const {
        auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
        if (!v) return std::nullopt;
        return trim(*v);
    }

    std::string require(const std::string& key) const {
        auto v = get(key);
        if (!v || v->empty()) throw ConfigError(file_.string() + ": missing required key '" + key + "'");
        return *v;
    }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const {
        auto it = lines_.find(key);
        std::string where = file_.string() + (it != lines_.end() ? ":" + std::to_string(it->second) : "");
        throw ConfigError(where + ": " + key + ": " + what);
    }

    template <class T>
    T number(const std::string& key, T fallback) const {
        auto v = get(key);
        if (!v) return fallback;
        T out{};
        auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
        if (ec != std::errc() || p != v->data() + v->size()) fail(key, "expected a number, got '" + *v + "'");
        return out;
    }

    double real(const std::string& key, double fallback) const {
        auto v = get(key);
        if (!v) return fallback;
        try {
            std::size_t used = 0;
            double d = std::stod(*v, &used);
            if (used != v->size()) throw std::invalid_argument("trailing");
            return d;
        } catch (const std::exception&) {
            fail(key, "expected a number, got '" + *v + "'");
        }
    }

    // Every key in `section` must be one of `known`.
    void only(const std::string& section, std::initializer_list<std::string_view> known) const {
        auto child = tree_.get_child_optional(section);
        if (!child) return;
        for (const auto& [k, _] : *child)
            if (std::find(known.begin(), known.end(), k) == known.end()) fail(section + "." + k, "unknown key");
    }

    void sections(std::initializer_list<std::string_view> known) const {
        for (const auto& [s, _] : tree_)
            if (std::find(known.begin(), known.end(), s) == known.end())
                throw ConfigError(file_.string() + ": unknown section [" + s + "]");
    }

    const pt::ptree& tree() const { return tree_; }
    const fs::path& file() const { return file_; }

private:
    fs::path file_;
    pt::ptree tree_;
    std::map<std::string, int> lines_;
};

fs::path resolve(const fs::path& base_file, const std::string& p) {
    fs::path path(p);
    if (path.is_absolute()) return path;
    return base_file.parent_path() / path;
}

Address parse_address(const Ini& ini, const std::string& key, const std::string& text) {
    try {
        return Address::parse(text);
    } catch (const std::exception&) {
        ini.fail(key, "invalid address '" + text + "'");
    }
}

}  // namespace

NodeConfig load_node_config(const fs::path& file) {
    Ini ini(file);
    ini.sections({"node"});
    ini.only("node", {"data_dir", "bind", "port", "key_file", "snapshot_every", "max_block_txs", "session_ttl_s",
                      "challenge_ttl_s"});
    NodeConfig c;
    if (auto v = ini.get("node.data_dir")) c.data_dir = resolve(file, *v);
    else c.data_dir = resolve(file, c.data_dir.string());
    if (auto v = ini.get("node.key_file")) c.key_file = resolve(file, *v);
    else c.key_file = resolve(file, c.key_file.string());
    if (auto v = ini.get("node.bind")) c.bind = *v;
    c.port = ini.number<std::uint16_t>("node.port", c.port);
    c.snapshot_every = ini.number<std::uint64_t>("node.snapshot_every", c.snapshot_every);
    c.max_block_txs = ini.number<std::size_t>("node.max_block_txs", c.max_block_txs);
    c.session_ttl_s = ini.number<std::uint64_t>("node.session_ttl_s", c.session_ttl_s);
    c.challenge_ttl_s = ini.number<std::uint64_t>("node.challenge_ttl_s", c.challenge_ttl_s);
    if (c.max_block_txs == 0) ini.fail("node.max_block_txs", "must be positive");
    return c;
}

void apply_env_overrides(NodeConfig& config) {
    if (const char* port = std::getenv("MEDLEDGER_PORT"); port && *port) {
        std::uint16_t p = 0;
        std::string_view s(port);
        auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), p);
        if (ec != std::errc() || end != s.data() + s.size())
            throw ConfigError("MEDLEDGER_PORT: expected a port number, got '" + std::string(s) + "'");
        config.port = p;
    }
    if (const char* dir = std::getenv("MEDLEDGER_DATA_DIR"); dir && *dir) config.data_dir = dir;
}

ConsensusConfig consensus_preset(ConsensusMode mode) {
    ConsensusConfig c;
    c.mode = mode;
    switch (mode) {
        case ConsensusMode::PoW:
            c.pow_difficulty_bits = 16;
            c.target_block_interval_ms = 1000;
            break;
        case ConsensusMode::PoS: c.target_block_interval_ms = 200; break;
        case ConsensusMode::DPoS: c.target_block_interval_ms = 50; break;
    }
    return c;
}

GenesisSpec load_genesis_spec(const fs::path& file, std::optional<std::string> preset) {
    Ini ini(file);
    ini.sections({"genesis", "admin", "consensus", "system"});
    ini.only("genesis", {"chain_id", "timestamp"});
    ini.only("admin", {"public_key", "address", "name"});
    ini.only("consensus", {"mode", "preset", "pow_difficulty_bits", "target_block_interval_ms", "stakes", "delegates",
                           "producer"});
    ini.only("system", {"start_date", "slots_per_day", "slot_length_minutes", "day_start_minutes"});

    GenesisSpec spec;
    spec.chain_id = ini.require("genesis.chain_id");
    spec.timestamp = ini.number<std::int64_t>("genesis.timestamp", 0);

    if (!ini.has_section("admin")) throw ConfigError(file.string() + ": missing [admin] section");
    auto pk_text = ini.require("admin.public_key");
    try {
        spec.admin_key = PublicKey::from_hex(pk_text);
    } catch (const std::exception&) {
        ini.fail("admin.public_key", "expected 32 bytes of hex");
    }
    spec.admin = address_of(spec.admin_key);
    if (auto a = ini.get("admin.address"); a && parse_address(ini, "admin.address", *a) != spec.admin)
        ini.fail("admin.address", "does not match admin.public_key");
    spec.admin_profile.name = ini.get("admin.name").value_or("Administrator");

    // An operator preset (argument or environment) overrides the file's
    // mode and timing keys.
    if (!preset || preset->empty()) {
        if (const char* env = std::getenv("MEDLEDGER_CONSENSUS_PRESET"); env && *env) preset = env;
    }
    bool operator_preset = preset && !preset->empty();
    if (!operator_preset) preset = ini.get("consensus.preset");
    ConsensusConfig c;
    try {
        if (preset && !preset->empty()) c = consensus_preset(parse_consensus_mode(*preset));
        else if (auto m = ini.get("consensus.mode")) c.mode = parse_consensus_mode(*m);
        else c = consensus_preset(ConsensusMode::PoW);
    } catch (const std::exception&) {
        if (operator_preset) throw ConfigError("consensus preset must be pow, pos or dpos, got '" + *preset + "'");
        ini.fail(ini.get("consensus.preset") ? "consensus.preset" : "consensus.mode", "expected pow, pos or dpos");
    }
    if (!operator_preset) {
        c.pow_difficulty_bits = ini.number<std::uint32_t>("consensus.pow_difficulty_bits", c.pow_difficulty_bits);
        c.target_block_interval_ms =
            ini.number<std::uint64_t>("consensus.target_block_interval_ms", c.target_block_interval_ms);
    }

    Address fallback = spec.admin;
    if (auto p = ini.get("consensus.producer")) fallback = parse_address(ini, "consensus.producer", *p);
    if (auto s = ini.get("consensus.stakes")) {
        for (const auto& item : split(*s, ',')) {
            auto colon = item.find(':');
            if (colon == std::string::npos) ini.fail("consensus.stakes", "expected address:stake pairs");
            auto addr = parse_address(ini, "consensus.stakes", trim(item.substr(0, colon)));
            std::uint64_t stake = 0;
            auto num = trim(item.substr(colon + 1));
            auto [end, ec] = std::from_chars(num.data(), num.data() + num.size(), stake);
            if (ec != std::errc() || end != num.data() + num.size() || stake == 0)
                ini.fail("consensus.stakes", "invalid stake '" + num + "'");
            c.stakes[addr] = stake;
        }
    }
    if (auto d = ini.get("consensus.delegates"))
        for (const auto& item : split(*d, ',')) c.delegates.push_back(parse_address(ini, "consensus.delegates", item));
    if (c.stakes.empty()) c.stakes[fallback] = 1;
    if (c.delegates.empty()) c.delegates.push_back(fallback);
    try {
        c.validate();
    } catch (const ConsensusError& e) {
        throw ConfigError(file.string() + ": [consensus]: " + e.what());
    }
    spec.consensus = c;

    if (auto d = ini.get("system.start_date")) {
        try {
            spec.system.start_date = parse_date(*d);
        } catch (const std::exception&) {
            ini.fail("system.start_date", "expected YYYY-MM-DD");
        }
    }
    spec.system.slots_per_day = ini.number<std::uint32_t>("system.slots_per_day", spec.system.slots_per_day);
    spec.system.slot_length_minutes =
        ini.number<std::uint32_t>("system.slot_length_minutes", spec.system.slot_length_minutes);
    spec.system.day_start_minutes = ini.number<std::uint32_t>("system.day_start_minutes", spec.system.day_start_minutes);
    if (!spec.system.valid()) throw ConfigError(file.string() + ": [system]: slot grid does not fit in one day");
    return spec;
}

void write_key_files(const fs::path& base, const KeyPair& key) {
    auto priv = fs::path(base.string() + ".key");
    auto pub = fs::path(base.string() + ".pub");
    if (fs::exists(priv) || fs::exists(pub))
        throw ConfigError("refusing to overwrite existing key file " + (fs::exists(priv) ? priv : pub).string());
    if (base.has_parent_path()) fs::create_directories(base.parent_path());
    std::string pub_text = "address = " + key.address().str() + "\npublic_key = " + key.public_key().hex() + "\n";
    {
        auto old = ::umask(077);
        std::ofstream out(priv);
        ::umask(old);
        if (!out) throw ConfigError("cannot write " + priv.string());
        out << pub_text << "private_key = " << key.private_key().hex() << "\n";
    }
    fs::permissions(priv, fs::perms::owner_read | fs::perms::owner_write, fs::perm_options::replace);
    std::ofstream out(pub);
    if (!out) throw ConfigError("cannot write " + pub.string());
    out << pub_text;
}

KeyPair load_key_file(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError(file.string() + ": cannot open key file");
    std::string line;
    int n = 0;
    std::optional<KeyPair> key;
    std::optional<Address> claimed;
    while (std::getline(in, line)) {
        ++n;
        auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError(file.string() + ":" + std::to_string(n) + ": expected key = value");
        auto k = trim(t.substr(0, eq));
        auto v = trim(t.substr(eq + 1));
        try {
            if (k == "private_key") key = KeyPair::from_private_key(PrivateKey::from_hex(v));
            else if (k == "address") claimed = Address::parse(v);
        } catch (const std::exception& e) {
            throw ConfigError(file.string() + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    if (!key) throw ConfigError(file.string() + ": no private_key line");
    if (claimed && *claimed != key->address())
        throw ConfigError(file.string() + ": address does not match private_key");
    return *key;
}

namespace {

std::vector<std::size_t> parse_ids(const Ini& ini, const std::string& key, const std::string& text,
                                   std::size_t node_count) {
    std::vector<std::size_t> out;
    for (const auto& item : split(text, ',')) {
        std::size_t id = 0;
        auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), id);
        if (ec != std::errc() || end != item.data() + item.size() || id >= node_count)
            ini.fail(key, "invalid node id '" + item + "'");
        out.push_back(id);
    }
    return out;
}

}  // namespace

Scenario load_scenario(const fs::path& file) {
    Ini ini(file);
    ini.sections({"scenario", "network", "consensus", "faults", "load", "schedule"});
    ini.only("scenario", {"name", "run_ms", "drain_ms"});
    ini.only("network", {"nodes", "seed", "latency_min_ms", "latency_max_ms", "fanout"});
    ini.only("consensus", {"mode", "pow_difficulty_bits", "pow_hashes_per_ms", "block_interval_ms", "max_block_txs"});
    ini.only("load", {"txs", "rate_tps"});

    Scenario s;
    s.name = ini.get("scenario.name").value_or(file.stem().string());
    s.run_ms = ini.number<std::uint64_t>("scenario.run_ms", s.run_ms);
    s.drain_ms = ini.number<std::uint64_t>("scenario.drain_ms", s.drain_ms);

    auto& c = s.sim;
    c.node_count = ini.number<std::size_t>("network.nodes", c.node_count);
    c.seed = ini.number<std::uint64_t>("network.seed", c.seed);
    c.latency_min_ms = ini.number<std::uint64_t>("network.latency_min_ms", c.latency_min_ms);
    c.latency_max_ms = ini.number<std::uint64_t>("network.latency_max_ms", c.latency_max_ms);
    c.fanout = ini.number<std::size_t>("network.fanout", c.fanout);
    if (c.node_count == 0) ini.fail("network.nodes", "must be at least 1");

    if (auto m = ini.get("consensus.mode")) {
        try {
            c.mode = parse_consensus_mode(*m);
        } catch (const std::exception&) {
            ini.fail("consensus.mode", "expected pow, pos or dpos");
        }
    }
    c.pow_difficulty_bits = ini.number<std::uint32_t>("consensus.pow_difficulty_bits", c.pow_difficulty_bits);
    c.pow_hashes_per_ms = ini.real("consensus.pow_hashes_per_ms", c.pow_hashes_per_ms);
    c.block_interval_ms = ini.number<std::uint64_t>("consensus.block_interval_ms", c.block_interval_ms);
    c.max_block_txs = ini.number<std::size_t>("consensus.max_block_txs", c.max_block_txs);

    if (auto faults = ini.tree().get_child_optional("faults")) {
        for (const auto& [k, v] : *faults) {
            auto key = "faults." + k;
            auto ids = parse_ids(ini, key, k, c.node_count);
            try {
                c.faults[ids.at(0)] = parse_fault_kind(trim(v.data()));
            } catch (const SimError& e) {
                ini.fail(key, e.what());
            }
        }
    }

    s.txs = ini.number<std::uint64_t>("load.txs", s.txs);
    s.rate_tps = ini.number<std::uint64_t>("load.rate_tps", s.rate_tps);
    if (s.txs > 0 && s.rate_tps == 0) ini.fail("load.rate_tps", "must be positive when txs > 0");

    // [schedule] lines: <time_ms> = partition a,b|c,d  |  heal  |  fault <id> <kind>
    if (auto sched = ini.tree().get_child_optional("schedule")) {
        for (const auto& [k, v] : *sched) {
            auto key = "schedule." + k;
            ScenarioStep step;
            auto [end, ec] = std::from_chars(k.data(), k.data() + k.size(), step.at_ms);
            if (ec != std::errc() || end != k.data() + k.size()) ini.fail(key, "key must be a time in ms");
            auto words = split(trim(v.data()), ' ');
            if (words.empty()) ini.fail(key, "empty action");
            if (words[0] == "heal" && words.size() == 1) {
                step.kind = ScenarioStep::Kind::Heal;
            } else if (words[0] == "partition" && words.size() == 2) {
                step.kind = ScenarioStep::Kind::Partition;
                auto groups = split(words[1], '|');
                if (groups.size() != 2) ini.fail(key, "expected partition <ids>|<ids>");
                step.group_a = parse_ids(ini, key, groups[0], c.node_count);
                step.group_b = parse_ids(ini, key, groups[1], c.node_count);
                if (step.group_a.size() + step.group_b.size() != c.node_count)
                    ini.fail(key, "partition groups must cover every node");
            } else if (words[0] == "fault" && words.size() == 3) {
                step.kind = ScenarioStep::Kind::Fault;
                step.node = parse_ids(ini, key, words[1], c.node_count).at(0);
                try {
                    step.fault = parse_fault_kind(words[2]);
                } catch (const SimError& e) {
                    ini.fail(key, e.what());
                }
            } else {
                ini.fail(key, "unknown action '" + trim(v.data()) + "'");
            }
            s.steps.push_back(step);
        }
    }
    std::stable_sort(s.steps.begin(), s.steps.end(),
                     [](const ScenarioStep& a, const ScenarioStep& b) { return a.at_ms < b.at_ms; });
    try {
        c.validate();
    } catch (const SimError& e) {
        throw ConfigError(file.string() + ": " + e.what());
    }
    return s;
}

ScenarioResult run_scenario(const Scenario& scenario) {
    Simulation sim(scenario.sim);
    for (std::uint64_t i = 0; i < scenario.txs; ++i) {
        auto at = i * 1000 / scenario.rate_tps;
        Writer w;
        w.str("medledger.scenario.client").u64(scenario.sim.seed).u64(i);
        auto key = KeyPair::generate(sha256(w.data()).view());
        cmd::RegisterUser reg{Role::Patient, key.public_key(), Profile{"client-" + std::to_string(i), "", ""}};
        sim.schedule_tx(at, i % scenario.sim.node_count,
                        build_transaction(key, 0, Command{reg}, scenario.sim.epoch_ms + static_cast<std::int64_t>(at)));
    }
    for (const auto& step : scenario.steps) {
        if (step.at_ms > scenario.run_ms) break;
        sim.run_until(step.at_ms);
        switch (step.kind) {
            case ScenarioStep::Kind::Partition: sim.partition(step.group_a, step.group_b); break;
            case ScenarioStep::Kind::Heal: sim.heal(); break;
            case ScenarioStep::Kind::Fault: sim.inject_fault(step.node, step.fault); break;
        }
    }
    sim.run_until(scenario.run_ms);
    sim.set_production(false);
    sim.run_until(scenario.run_ms + scenario.drain_ms);

    ScenarioResult r;
    r.report = sim.convergence_report();
    r.event_log = sim.event_log();
    std::set<Address> honest;
    for (std::size_t i = 0; i < sim.size(); ++i)
        if (sim.node(i).honest()) honest.insert(sim.node(i).key().address());
    r.honest_producers_only = true;
    for (std::size_t i = 0; i < sim.size(); ++i) {
        if (!sim.node(i).honest()) continue;
        for (const auto& b : sim.node(i).chain().blocks())
            if (b.header.height > 0 && !honest.contains(b.header.producer)) r.honest_producers_only = false;
    }
    return r;
}

}  // namespace medledger
