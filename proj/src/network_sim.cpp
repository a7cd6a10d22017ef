#include "medledger/network_sim.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

namespace medledger {

std::string_view to_string(FaultKind k) {
    return k == FaultKind::Silent ? "silent" : "equivocating";
}

FaultKind parse_fault_kind(std::string_view s) {
    if (s == "silent" || s == "Silent") return FaultKind::Silent;
    if (s == "equivocating" || s == "Equivocating") return FaultKind::Equivocating;
    throw SimError("unknown fault kind '" + std::string(s) + "'");
}

void SimConfig::validate() const {
    if (node_count == 0) throw SimError("node_count must be at least 1");
    if (latency_min_ms > latency_max_ms) throw SimError("latency_min_ms exceeds latency_max_ms");
    for (const auto& [id, _] : faults)
        if (id >= node_count) throw SimError("faulty node " + std::to_string(id) + " is not in the network");
    if (!(pow_hashes_per_ms > 0)) throw SimError("pow_hashes_per_ms must be positive");
    if (pow_difficulty_bits > kMaxPowDifficultyBits) throw SimError("pow_difficulty_bits must be <= 32");
    if (block_interval_ms == 0) throw SimError("block_interval_ms must be positive");
    if (max_block_txs == 0) throw SimError("max_block_txs must be positive");
    if (!stakes.empty()) {
        if (stakes.size() != node_count) throw SimError("stakes must list one entry per node");
        for (auto s : stakes)
            if (s == 0) throw SimError("stakes must be positive");
    }
}

namespace {

KeyPair derive_key(std::string_view label, std::uint64_t seed, std::uint64_t index) {
    Writer w;
    w.str(label).u64(seed).u64(index);
    auto d = sha256(w.data());
    return KeyPair::generate(d.view());
}

Digest payload_hash(const SimPayload& p) {
    return std::visit(
        [](const auto& v) -> Digest {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, SignedTransaction>) {
                return v.tx_hash;
            } else if constexpr (std::is_same_v<T, Block>) {
                return v.block_hash;
            } else if constexpr (std::is_same_v<T, PeerAnnounce>) {
                Writer w;
                w.str("announce").u64(v.node);
                return sha256(w.data());
            } else if constexpr (std::is_same_v<T, BlockRequest>) {
                Writer w;
                w.str("request").fixed(v.hash);
                return sha256(w.data());
            } else {
                Writer w;
                w.str("batch");
                for (const auto& b : v) w.fixed(b.block_hash);
                return sha256(w.data());
            }
        },
        p);
}

std::string_view payload_kind(const SimPayload& p) {
    switch (p.index()) {
        case 0: return "tx";
        case 1: return "block";
        case 2: return "announce";
        case 3: return "request";
        default: return "batch";
    }
}

}  // namespace

Simulation::Simulation(SimConfig config) : config_(std::move(config)), rng_(config_.seed) {
    config_.validate();
    admin_ = derive_key("medledger.sim.admin", config_.seed, 0);

    nodes_.resize(config_.node_count);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        nodes_[i].id_ = i;
        nodes_[i].key_ = derive_key("medledger.sim.node", config_.seed, i);
        if (auto it = config_.faults.find(i); it != config_.faults.end()) nodes_[i].fault_ = it->second;
    }

    consensus_.mode = config_.mode;
    consensus_.pow_difficulty_bits = config_.pow_difficulty_bits;
    consensus_.target_block_interval_ms = config_.block_interval_ms;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const auto& addr = nodes_[i].key_.address();
        consensus_.stakes[addr] = config_.stakes.empty() ? 1 : config_.stakes[i];
        consensus_.delegates.push_back(addr);
    }

    GenesisSpec spec;
    spec.chain_id = config_.chain_id;
    spec.timestamp = config_.epoch_ms;
    spec.admin = admin_.address();
    spec.admin_key = admin_.public_key();
    spec.admin_profile.name = "Simulation Admin";
    spec.consensus = consensus_;
    spec.system.start_date = static_cast<Date>(config_.epoch_ms / 86'400'000);
    genesis_ = make_genesis_block(spec);

    for (auto& n : nodes_) {
        n.chain_ = Chain(genesis_);
        apply_block(n.state_, genesis_);
        n.tree_.emplace(genesis_.block_hash, SimNode::Entry{genesis_, true, false});
        for (std::size_t j = 0; j < nodes_.size(); ++j)
            if (j != n.id_) n.peers_.push_back(j);
    }
    // Peer lists start full; the announce round only shows up in the log.
    for (auto& n : nodes_)
        if (n.fault_ != FaultKind::Silent) broadcast(n.id_, PeerAnnounce{n.id_}, true);
    for (auto& n : nodes_) schedule_production(n);
}

const SimNode& Simulation::node(std::size_t id) const {
    if (id >= nodes_.size()) throw SimError("unknown node " + std::to_string(id));
    return nodes_[id];
}

SimNode& Simulation::mut(std::size_t id) {
    if (id >= nodes_.size()) throw SimError("unknown node " + std::to_string(id));
    return nodes_[id];
}

void Simulation::push(Event e) {
    e.seq = seq_++;
    queue_.push(std::move(e));
}

void Simulation::send(std::size_t from, std::size_t to, SimPayload payload) {
    auto shared = std::make_shared<const SimPayload>(std::move(payload));
    Event e;
    auto span = config_.latency_max_ms - config_.latency_min_ms + 1;
    e.time = now_ + config_.latency_min_ms + rng_() % span;
    e.recipient = to;
    e.sender = from;
    e.payload_hash = payload_hash(*shared);
    e.payload = std::move(shared);
    push(std::move(e));
}

void Simulation::broadcast(std::size_t from, const SimPayload& payload, bool all_peers) {
    auto shared = std::make_shared<const SimPayload>(payload);
    auto hash = payload_hash(*shared);
    std::vector<std::size_t> targets = nodes_[from].peers_;
    if (!all_peers && config_.fanout > 0 && config_.fanout < targets.size()) {
        for (std::size_t i = 0; i < config_.fanout; ++i) {
            auto j = i + rng_() % (targets.size() - i);
            std::swap(targets[i], targets[j]);
        }
        targets.resize(config_.fanout);
    }
    auto span = config_.latency_max_ms - config_.latency_min_ms + 1;
    for (auto to : targets) {
        Event e;
        e.time = now_ + config_.latency_min_ms + rng_() % span;
        e.recipient = to;
        e.sender = from;
        e.payload_hash = hash;
        e.payload = shared;
        push(std::move(e));
    }
}

void Simulation::log_event(const Event& e, std::string_view what) {
    if (!config_.record_events) return;
    nlohmann::json j;
    j["t"] = e.time;
    j["node"] = e.recipient;
    j["event"] = what;
    switch (e.kind) {
        case Event::Kind::Deliver:
            j["from"] = e.sender;
            j["kind"] = payload_kind(*e.payload);
            j["hash"] = e.payload_hash.hex();
            break;
        case Event::Kind::ClientTx:
            j["kind"] = "client_tx";
            j["hash"] = e.payload_hash.hex();
            break;
        case Event::Kind::MineDone:
        case Event::Kind::SlotTick:
            j["generation"] = e.generation;
            j["round"] = e.round;
            break;
    }
    const auto& n = nodes_[e.recipient];
    j["height"] = n.chain_.height();
    j["tip"] = n.chain_.tip_hash().hex();
    log_.push_back(j.dump());
}

std::string Simulation::event_log_text() const {
    std::string out;
    for (const auto& l : log_) {
        out += l;
        out += '\n';
    }
    return out;
}

void Simulation::submit_tx(std::size_t node, SignedTransaction tx) {
    auto& n = mut(node);
    Event e;
    e.time = now_;
    e.recipient = node;
    e.sender = node;
    e.kind = Event::Kind::ClientTx;
    e.payload_hash = tx.tx_hash;
    log_event(e, "submit");
    on_tx(n, tx, std::nullopt);
}

void Simulation::schedule_tx(std::uint64_t at_ms, std::size_t node, SignedTransaction tx) {
    mut(node);
    Event e;
    e.time = std::max(at_ms, now_);
    e.recipient = node;
    e.sender = node;
    e.kind = Event::Kind::ClientTx;
    e.payload_hash = tx.tx_hash;
    e.payload = std::make_shared<const SimPayload>(std::move(tx));
    push(std::move(e));
}

void Simulation::run_until(std::uint64_t t) {
    if (t < now_) throw SimError("run_until target " + std::to_string(t) + " is before now " + std::to_string(now_));
    while (!queue_.empty() && queue_.top().time <= t) {
        Event e = queue_.top();
        queue_.pop();
        now_ = e.time;
        dispatch(e);
    }
    now_ = t;
}

void Simulation::dispatch(const Event& e) {
    auto& n = nodes_[e.recipient];
    if (n.fault_ == FaultKind::Silent) {
        log_event(e, "ignored");
        return;
    }
    switch (e.kind) {
        case Event::Kind::Deliver: {
            if (!group_.empty() && group_.at(e.sender) != group_.at(e.recipient)) {
                log_event(e, "dropped");
                return;
            }
            log_event(e, "deliver");
            const auto& p = *e.payload;
            if (const auto* tx = std::get_if<SignedTransaction>(&p)) {
                on_tx(n, *tx, e.sender);
            } else if (const auto* b = std::get_if<Block>(&p)) {
                on_block(n, *b, e.sender);
            } else if (const auto* req = std::get_if<BlockRequest>(&p)) {
                on_request(n, *req, e.sender);
            } else if (const auto* batch = std::get_if<std::vector<Block>>(&p)) {
                for (const auto& blk : *batch) on_block(n, blk, e.sender);
            }
            break;
        }
        case Event::Kind::ClientTx:
            log_event(e, "submit");
            on_tx(n, std::get<SignedTransaction>(*e.payload), std::nullopt);
            break;
        case Event::Kind::MineDone:
            log_event(e, "mined");
            on_mine_done(n, e);
            break;
        case Event::Kind::SlotTick:
            log_event(e, "tick");
            on_tick(n, e);
            break;
    }
}

ValidationOptions Simulation::options(SimNode& n) {
    ValidationOptions o;
    o.now_ms = config_.epoch_ms + static_cast<std::int64_t>(now_);
    o.signature_cache = &n.sig_cache_;
    return o;
}

void Simulation::on_tx(SimNode& n, const SignedTransaction& tx, std::optional<std::size_t> /*from*/) {
    if (n.mempool_.contains(tx.tx_hash) || n.committed_.contains(tx.tx_hash)) return;
    auto key = n.state_.sender_key(tx);
    if (!key) {
        ++n.rejected_txs_;
        return;
    }
    if (!n.sig_cache_.contains(tx)) {
        if (!check_transaction_integrity(tx, *key)) {
            ++n.rejected_txs_;
            return;
        }
        n.sig_cache_.insert(tx);
    }
    if (tx.nonce < n.state_.next_nonce(tx.sender)) return;
    n.mempool_.add(tx);
    if (n.honest()) broadcast(n.id_, tx, false);
}

void Simulation::on_block(SimNode& n, Block block, std::size_t from) {
    if (!n.honest()) return;  // equivocators stay on their private branch
    if (n.tree_.contains(block.block_hash) || block.header.height == 0) return;
    auto parent = block.header.prev_hash;
    if (!n.tree_.contains(parent)) {
        if (n.orphan_hashes_.insert(block.block_hash).second) n.orphans_[parent].push_back(std::move(block));
        // Only the root of an orphan run is fetched, at most once per round trip.
        if (!n.orphan_hashes_.contains(parent)) {
            auto [it, fresh] = n.requested_at_.try_emplace(parent, now_);
            if (fresh || now_ >= it->second + 2 * config_.latency_max_ms + 1) {
                it->second = now_;
                send(n.id_, from, BlockRequest{parent});
            }
        }
        return;
    }
    auto hash = block.block_hash;
    if (!attach(n, block)) return;
    broadcast(n.id_, block, false);
    settle_orphans(n, hash);
    choose_tip(n);
}

void Simulation::on_request(SimNode& n, const BlockRequest& req, std::size_t from) {
    if (!n.honest()) return;
    auto it = n.tree_.find(req.hash);
    if (it == n.tree_.end()) return;
    std::vector<Block> batch;
    const Block* b = &it->second.block;
    while (b->header.height > 0 && batch.size() < 256) {
        batch.push_back(*b);
        b = &n.tree_.at(b->header.prev_hash).block;
    }
    std::reverse(batch.begin(), batch.end());
    send(n.id_, from, std::move(batch));
}

bool Simulation::attach(SimNode& n, Block block) {
    const auto& parent = n.tree_.at(block.header.prev_hash);
    if (parent.invalid) {
        ++n.rejected_blocks_;
        return false;
    }
    if (!validate_block_structure(block, parent.block, consensus_, options(n))) {
        ++n.rejected_blocks_;
        return false;
    }
    auto hash = block.block_hash;
    n.tree_.emplace(hash, SimNode::Entry{std::move(block), false, false});
    return true;
}

void Simulation::settle_orphans(SimNode& n, const Digest& parent) {
    std::vector<Digest> work{parent};
    while (!work.empty()) {
        auto h = work.back();
        work.pop_back();
        auto it = n.orphans_.find(h);
        if (it == n.orphans_.end()) continue;
        auto children = std::move(it->second);
        n.orphans_.erase(it);
        n.requested_at_.erase(h);
        for (auto& c : children) {
            n.orphan_hashes_.erase(c.block_hash);
            if (n.tree_.contains(c.block_hash)) continue;
            auto ch = c.block_hash;
            if (attach(n, std::move(c))) work.push_back(ch);
        }
    }
}

namespace {

void mark_invalid(std::map<Digest, SimNode::Entry>& tree, const Digest& hash) {
    tree.at(hash).invalid = true;
    bool changed = true;
    while (changed) {
        changed = false;
        for (auto& [h, e] : tree) {
            if (e.invalid || e.block.header.height == 0) continue;
            auto p = tree.find(e.block.header.prev_hash);
            if (p != tree.end() && p->second.invalid) {
                e.invalid = true;
                changed = true;
            }
        }
    }
}

}  // namespace

void Simulation::choose_tip(SimNode& n) {
    for (;;) {
        Digest best = n.chain_.tip_hash();
        std::uint64_t best_height = n.chain_.height();
        for (const auto& [h, e] : n.tree_) {
            if (e.invalid) continue;
            if (better_tip(e.block.header.height, h, best_height, best)) {
                best = h;
                best_height = e.block.header.height;
            }
        }
        if (best == n.chain_.tip_hash()) return;
        if (switch_to(n, best)) return;
    }
}

void Simulation::extend_tip(SimNode& n, const Block& block) {
    apply_block(n.state_, block);
    n.chain_.append(block);
    for (const auto& tx : block.transactions) n.committed_.insert(tx.tx_hash);
    n.mempool_.remove_block(block);
}

bool Simulation::switch_to(SimNode& n, const Digest& target) {
    auto& entry = n.tree_.at(target);
    if (entry.block.header.prev_hash == n.chain_.tip_hash()) {
        auto v = validate_block(entry.block, &n.chain_.tip(), consensus_, n.state_, options(n));
        if (!v) {
            ++n.rejected_blocks_;
            mark_invalid(n.tree_, target);
            return false;
        }
        entry.validated = true;
        extend_tip(n, entry.block);
        n.mempool_.prune(n.state_);
        on_tip_changed(n);
        return true;
    }

    std::vector<const Block*> path;
    for (const Block* b = &entry.block;; b = &n.tree_.at(b->header.prev_hash).block) {
        path.push_back(b);
        if (b->header.height == 0) break;
    }
    std::reverse(path.begin(), path.end());

    EhrState state;
    Chain chain;
    for (const Block* b : path) {
        auto& e = n.tree_.at(b->block_hash);
        if (!e.validated) {
            auto v = validate_block(*b, chain.empty() ? nullptr : &chain.tip(), state.consensus(), state, options(n));
            if (!v) {
                ++n.rejected_blocks_;
                mark_invalid(n.tree_, b->block_hash);
                return false;
            }
            e.validated = true;
        }
        apply_block(state, *b);
        chain.append(*b);
    }

    std::set<Digest> committed;
    for (const auto& b : chain.blocks())
        for (const auto& tx : b.transactions) committed.insert(tx.tx_hash);
    for (const auto& b : n.chain_.blocks())
        for (const auto& tx : b.transactions)
            if (!committed.contains(tx.tx_hash) && b.header.height > 0) n.mempool_.add(tx);
    for (const auto& h : committed) n.mempool_.remove(h);

    n.chain_ = std::move(chain);
    n.state_ = std::move(state);
    n.committed_ = std::move(committed);
    n.mempool_.prune(n.state_);
    ++n.reorgs_;
    on_tip_changed(n);
    return true;
}

void Simulation::on_tip_changed(SimNode& n) {
    ++n.generation_;
    n.pending_.reset();
    schedule_production(n);
}

void Simulation::schedule_production(SimNode& n) {
    if (!production_ || n.fault_ == FaultKind::Silent) return;
    const auto& tip = n.chain_.tip();
    if (config_.mode == ConsensusMode::PoW) {
        auto txs = n.mempool_.select(n.state_, config_.max_block_txs);
        auto ts = std::max(config_.epoch_ms + static_cast<std::int64_t>(now_), tip.header.timestamp + 1);
        auto header = draft_header(tip, txs, n.key_.address(), ts);
        auto proof = pow_mine(header_preimage(header), config_.pow_difficulty_bits, 0);
        auto attempts = static_cast<double>(std::get<PowProof>(proof).nonce) + 1.0;
        auto delay = static_cast<std::uint64_t>(std::ceil(attempts / config_.pow_hashes_per_ms));
        n.pending_ = assemble_block(tip, std::move(txs), n.key_, proof, ts, consensus_);
        Event e;
        e.time = now_ + std::max<std::uint64_t>(delay, 1);
        e.recipient = n.id_;
        e.sender = n.id_;
        e.kind = Event::Kind::MineDone;
        e.generation = n.generation_;
        push(std::move(e));
        return;
    }
    Event e;
    auto parent_time = static_cast<std::uint64_t>(tip.header.timestamp - config_.epoch_ms);
    e.time = std::max(now_, parent_time + config_.block_interval_ms);
    e.recipient = n.id_;
    e.sender = n.id_;
    e.kind = Event::Kind::SlotTick;
    e.generation = n.generation_;
    e.round = 0;
    push(std::move(e));
}

void Simulation::on_mine_done(SimNode& n, const Event& e) {
    if (!production_ || e.generation != n.generation_ || !n.pending_) return;
    auto block = std::move(*n.pending_);
    n.pending_.reset();
    publish(n, block);
}

void Simulation::on_tick(SimNode& n, const Event& e) {
    if (!production_ || e.generation != n.generation_) return;
    const auto& tip = n.chain_.tip();
    auto parent_time = static_cast<std::uint64_t>(tip.header.timestamp - config_.epoch_ms);
    auto height = tip.header.height + 1;
    const auto& self = n.key_.address();
    for (std::uint64_t k = e.round;; ++k) {
        auto due = parent_time + (k + 1) * config_.block_interval_ms;
        if (due > now_) {
            Event next;
            next.time = due;
            next.recipient = n.id_;
            next.sender = n.id_;
            next.kind = Event::Kind::SlotTick;
            next.generation = n.generation_;
            next.round = k;
            push(std::move(next));
            return;
        }
        ConsensusProof proof;
        if (config_.mode == ConsensusMode::PoS) {
            proof = pos_select(tip.block_hash, consensus_.stakes, static_cast<std::uint32_t>(k));
            if (std::get<PosProof>(proof).selected != self) continue;
        } else {
            proof = dpos_producer(height, consensus_.delegates, k);
            if (std::get<DposProof>(proof).producer != self) continue;
        }
        auto ts = config_.epoch_ms + static_cast<std::int64_t>(now_);
        auto txs = n.mempool_.select(n.state_, config_.max_block_txs);
        publish(n, assemble_block(tip, std::move(txs), n.key_, proof, ts, consensus_));
        return;
    }
}

void Simulation::publish(SimNode& n, const Block& block) {
    auto v = validate_block(block, &n.chain_.tip(), consensus_, n.state_, options(n));
    if (!v) throw std::logic_error("node " + std::to_string(n.id_) + " produced an invalid block: " +
                                   v.reason().describe());
    n.tree_.emplace(block.block_hash, SimNode::Entry{block, true, false});
    extend_tip(n, block);
    n.mempool_.prune(n.state_);
    if (n.honest() || n.released_) broadcast(n.id_, block, true);
    on_tip_changed(n);
}

void Simulation::inject_fault(std::size_t node, FaultKind kind) {
    auto& n = mut(node);
    n.fault_ = kind;
    n.released_ = false;
    ++n.generation_;
    n.pending_.reset();
    schedule_production(n);
}

void Simulation::partition(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    std::map<std::size_t, int> g;
    for (auto id : a) {
        mut(id);
        g[id] = 0;
    }
    for (auto id : b) {
        mut(id);
        if (g.contains(id)) throw SimError("node " + std::to_string(id) + " is in both partition groups");
        g[id] = 1;
    }
    if (g.size() != nodes_.size()) throw SimError("partition groups must cover every node");
    group_ = std::move(g);
}

void Simulation::heal() {
    bool changed = false;
    if (!group_.empty()) {
        group_.clear();
        changed = true;
    }
    for (auto& n : nodes_) {
        if (n.fault_ != FaultKind::Equivocating || n.released_) continue;
        n.released_ = true;
        changed = true;
        std::vector<Block> branch(n.chain_.blocks().begin() + 1, n.chain_.blocks().end());
        if (!branch.empty()) broadcast(n.id_, branch, true);
    }
    if (!changed) return;
    for (auto& n : nodes_)
        if (n.honest()) broadcast(n.id_, n.chain_.tip(), true);
}

void Simulation::set_production(bool enabled) {
    if (production_ == enabled) return;
    production_ = enabled;
    for (auto& n : nodes_) {
        ++n.generation_;
        n.pending_.reset();
        if (enabled) schedule_production(n);
    }
}

void Simulation::inject_block(std::size_t node, Block block, std::size_t from) {
    mut(from);
    on_block(mut(node), std::move(block), from);
}

ConvergenceReport Simulation::convergence_report() const {
    ConvergenceReport r;
    r.time_ms = now_;
    std::optional<Digest> common;
    r.all_honest_agree = true;
    for (const auto& n : nodes_) {
        r.nodes.push_back({n.id_, n.fault_, n.chain_.tip_hash(), n.chain_.height(), n.mempool_.size()});
        if (!n.honest()) continue;
        if (!common) common = n.chain_.tip_hash();
        else if (*common != n.chain_.tip_hash()) r.all_honest_agree = false;
    }
    return r;
}

}  // namespace medledger
