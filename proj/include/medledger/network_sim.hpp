#pragma once

// Deterministic discrete-event simulation of a full-mesh network of block
// producing nodes. Time is virtual (milliseconds since the sim epoch).

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "medledger/consensus.hpp"
#include "medledger/ehr_state.hpp"
#include "medledger/ledger.hpp"
#include "medledger/mempool.hpp"

namespace medledger {

enum class FaultKind { Silent, Equivocating };
std::string_view to_string(FaultKind k);
FaultKind parse_fault_kind(std::string_view s);  // silent | equivocating

struct SimConfig {
    std::size_t node_count = 4;
    std::uint64_t latency_min_ms = 2;
    std::uint64_t latency_max_ms = 20;
    std::size_t fanout = 0;  // 0 = every peer
    std::map<std::size_t, FaultKind> faults;
    std::uint64_t seed = 1;

    ConsensusMode mode = ConsensusMode::DPoS;
    std::uint32_t pow_difficulty_bits = 12;
    double pow_hashes_per_ms = 20.0;  // per node
    std::uint64_t block_interval_ms = 50;  // PoS / DPoS slot length
    std::vector<std::uint64_t> stakes;     // PoS; empty = one unit per node
    std::size_t max_block_txs = 20;

    std::string chain_id = "medledger-sim";
    std::int64_t epoch_ms = 1'700'000'000'000;
    bool record_events = true;

    // Throws std::invalid_argument.
    void validate() const;
};

class SimError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct BlockRequest {
    Digest hash;
};
struct PeerAnnounce {
    std::size_t node = 0;
};
using SimPayload = std::variant<SignedTransaction, Block, PeerAnnounce, BlockRequest, std::vector<Block>>;

class SimNode {
public:
    std::size_t id() const { return id_; }
    const KeyPair& key() const { return key_; }
    std::optional<FaultKind> fault() const { return fault_; }
    bool honest() const { return !fault_.has_value(); }
    const std::vector<std::size_t>& peers() const { return peers_; }

    const Chain& chain() const { return chain_; }
    const EhrState& state() const { return state_; }
    const Mempool& mempool() const { return mempool_; }
    bool knows_block(const Digest& h) const { return tree_.contains(h); }
    bool committed(const Digest& tx_hash) const { return committed_.contains(tx_hash); }
    std::size_t rejected_blocks() const { return rejected_blocks_; }
    std::size_t rejected_txs() const { return rejected_txs_; }
    std::size_t reorgs() const { return reorgs_; }

    struct Entry {
        Block block;
        bool validated = false;
        bool invalid = false;
    };

private:
    friend class Simulation;

    std::size_t id_ = 0;
    KeyPair key_;
    std::optional<FaultKind> fault_;
    std::vector<std::size_t> peers_;

    std::map<Digest, Entry> tree_;
    std::map<Digest, std::vector<Block>> orphans_;  // by missing parent hash
    std::set<Digest> orphan_hashes_;
    std::map<Digest, std::uint64_t> requested_at_;
    Chain chain_;
    EhrState state_;
    Mempool mempool_;
    std::set<Digest> committed_;
    SignatureCache sig_cache_;

    std::uint64_t generation_ = 0;  // bumps on tip change; stale timers check it
    std::optional<Block> pending_;  // PoW block being mined
    bool released_ = false;         // equivocator has published its branch

    std::size_t rejected_blocks_ = 0;
    std::size_t rejected_txs_ = 0;
    std::size_t reorgs_ = 0;
};

struct NodeReport {
    std::size_t node = 0;
    std::optional<FaultKind> fault;
    Digest tip;
    std::uint64_t height = 0;
    std::size_t mempool_size = 0;
};

struct ConvergenceReport {
    std::uint64_t time_ms = 0;
    std::vector<NodeReport> nodes;
    bool all_honest_agree = false;
};

class Simulation {
public:
    // Builds the genesis block, the nodes and a full-mesh peer list.
    explicit Simulation(SimConfig config);

    const SimConfig& config() const { return config_; }
    std::uint64_t now() const { return now_; }
    const Block& genesis() const { return genesis_; }
    const KeyPair& admin_key() const { return admin_; }
    const ConsensusConfig& consensus() const { return consensus_; }
    std::size_t size() const { return nodes_.size(); }
    const SimNode& node(std::size_t id) const;

    // Delivers a client transaction to `node` at the current time.
    void submit_tx(std::size_t node, SignedTransaction tx);
    // Queues a client transaction for delivery at `at_ms`.
    void schedule_tx(std::uint64_t at_ms, std::size_t node, SignedTransaction tx);

    // Processes every event with time <= t.
    void run_until(std::uint64_t t);

    void inject_fault(std::size_t node, FaultKind kind);
    // Drops deliveries between the two groups until heal().
    void partition(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b);
    // Ends a partition, releases equivocators' private branches and has
    // every node re-announce its tip. No-op when there is nothing to heal.
    void heal();
    bool partitioned() const { return !group_.empty(); }

    // Stops or resumes block production on every node.
    void set_production(bool enabled);

    // Test hook: `node` receives `block` as if sent by `from`.
    void inject_block(std::size_t node, Block block, std::size_t from);

    ConvergenceReport convergence_report() const;

    // One JSON object per processed event.
    const std::vector<std::string>& event_log() const { return log_; }
    std::string event_log_text() const;

private:
    struct Event {
        std::uint64_t time = 0;
        std::size_t recipient = 0;
        Digest payload_hash;
        std::size_t sender = 0;
        std::uint64_t seq = 0;

        enum class Kind { Deliver, ClientTx, MineDone, SlotTick } kind = Kind::Deliver;
        std::shared_ptr<const SimPayload> payload;
        std::uint64_t generation = 0;
        std::uint64_t round = 0;

        bool operator>(const Event& o) const {
            return std::tie(time, recipient, payload_hash, sender, seq) >
                   std::tie(o.time, o.recipient, o.payload_hash, o.sender, o.seq);
        }
    };

    SimNode& mut(std::size_t id);
    void push(Event e);
    void send(std::size_t from, std::size_t to, SimPayload payload);
    void broadcast(std::size_t from, const SimPayload& payload, bool all_peers);
    void log_event(const Event& e, std::string_view what);
    void dispatch(const Event& e);

    void on_tx(SimNode& n, const SignedTransaction& tx, std::optional<std::size_t> from);
    void on_block(SimNode& n, Block block, std::size_t from);
    void on_request(SimNode& n, const BlockRequest& req, std::size_t from);
    void on_mine_done(SimNode& n, const Event& e);
    void on_tick(SimNode& n, const Event& e);

    // Inserts a block whose parent is known; returns false if rejected.
    bool attach(SimNode& n, Block block);
    void settle_orphans(SimNode& n, const Digest& parent);
    void choose_tip(SimNode& n);
    bool switch_to(SimNode& n, const Digest& target);
    void extend_tip(SimNode& n, const Block& block);
    void on_tip_changed(SimNode& n);
    void schedule_production(SimNode& n);
    void publish(SimNode& n, const Block& block);
    ValidationOptions options(SimNode& n);

    SimConfig config_;
    ConsensusConfig consensus_;
    KeyPair admin_;
    Block genesis_;
    std::vector<SimNode> nodes_;

    std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
    std::uint64_t now_ = 0;
    std::uint64_t seq_ = 0;
    std::mt19937_64 rng_;
    bool production_ = true;
    std::map<std::size_t, int> group_;  // partition side per node; empty = connected

    std::vector<std::string> log_;
};

}  // namespace medledger
