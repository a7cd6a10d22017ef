#include "medledger/node.hpp"

#include <chrono>

namespace medledger {

namespace fs = std::filesystem;

std::string_view to_string(ReceiptStatus s) {
    switch (s) {
        case ReceiptStatus::Pending: return "Pending";
        case ReceiptStatus::Committed: return "Committed";
        case ReceiptStatus::Rejected: return "Rejected";
    }
    return "Unknown";
}

std::int64_t system_clock_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

namespace {

TxReceipt receipt_from_audit(const AuditEntry& e) {
    TxReceipt r;
    r.tx_hash = e.tx_hash;
    r.height = e.height;
    if (e.allowed()) {
        r.status = ReceiptStatus::Committed;
    } else {
        r.status = ReceiptStatus::Rejected;
        r.reason = std::string(to_string(*e.deny));
    }
    return r;
}

TxReceipt rejected(const Digest& h, std::string_view reason) {
    TxReceipt r;
    r.tx_hash = h;
    r.status = ReceiptStatus::Rejected;
    r.reason = std::string(reason);
    return r;
}

}  // namespace

Block LedgerNode::initialize(const fs::path& data_dir, const GenesisSpec& spec) {
    if (fs::exists(data_dir) && !fs::is_empty(data_dir))
        throw StorageError(StorageErrc::AlreadyInitialized, data_dir.string() + " is not empty");
    auto genesis = make_genesis_block(spec);
    EhrState empty;
    if (auto v = validate_block(genesis, nullptr, spec.consensus, empty); !v)
        throw LedgerError("genesis block rejected: " + v.reason().describe());
    ChainStore store(data_dir);
    store.initialize(genesis);
    return genesis;
}

LedgerNode::LedgerNode(NodeOptions options)
    : options_(std::move(options)),
      store_(options_.data_dir, StoreOptions{options_.snapshot_every, options_.sync, {}}) {
    if (!store_.has_chain())
        throw StorageError(StorageErrc::NotInitialized, options_.data_dir.string() + " holds no chain; run init first");
    recovery_info_ = store_.recover();
    chain_ = recovery_info_.chain;
    auto state = std::make_shared<EhrState>(recovery_info_.state);
    for (const auto& e : state->audit_log()) receipts_[e.tx_hash] = receipt_from_audit(e);
    state_ = std::move(state);
}

LedgerNode::~LedgerNode() { stop(); }

TxReceipt LedgerNode::submit(const SignedTransaction& tx) {
    std::lock_guard lock(mu_);
    if (auto it = receipts_.find(tx.tx_hash); it != receipts_.end()) return it->second;

    auto key = state_->sender_key(tx);
    if (!key) return rejected(tx.tx_hash, to_string(TxReject::UnknownSender));
    if (!sig_cache_.contains(tx)) {
        if (auto v = check_transaction_integrity(tx, *key); !v) return rejected(tx.tx_hash, to_string(v.reason()));
        sig_cache_.insert(tx);
    }
    auto expected = state_->next_nonce(tx.sender);
    if (auto q = queued_.find(tx.sender); q != queued_.end()) expected += q->second;
    if (tx.nonce != expected) return rejected(tx.tx_hash, to_string(TxReject::NonceMismatch));

    mempool_.add(tx);
    ++queued_[tx.sender];
    TxReceipt r;
    r.tx_hash = tx.tx_hash;
    receipts_[tx.tx_hash] = r;
    cv_.notify_all();
    return r;
}

std::optional<TxReceipt> LedgerNode::receipt(const Digest& tx_hash) const {
    std::lock_guard lock(mu_);
    auto it = receipts_.find(tx_hash);
    if (it == receipts_.end()) return std::nullopt;
    return it->second;
}

std::shared_ptr<const EhrState> LedgerNode::state() const {
    std::lock_guard lock(mu_);
    return state_;
}

std::uint64_t LedgerNode::height() const {
    std::lock_guard lock(mu_);
    return chain_.height();
}

Digest LedgerNode::tip_hash() const {
    std::lock_guard lock(mu_);
    return chain_.tip_hash();
}

std::optional<Block> LedgerNode::block(std::uint64_t height) const {
    std::lock_guard lock(mu_);
    if (height > chain_.height()) return std::nullopt;
    return chain_.at(height);
}

std::size_t LedgerNode::mempool_size() const {
    std::lock_guard lock(mu_);
    return mempool_.size();
}

std::uint64_t LedgerNode::pending_nonce(const Address& sender) const {
    std::lock_guard lock(mu_);
    auto n = state_->next_nonce(sender);
    if (auto q = queued_.find(sender); q != queued_.end()) n += q->second;
    return n;
}

std::optional<std::string> LedgerNode::fatal_error() const {
    std::lock_guard lock(mu_);
    return fatal_;
}

std::optional<std::uint64_t> LedgerNode::own_round(const Block& tip, const ConsensusConfig& config) const {
    const auto& self = options_.producer.address();
    auto height = tip.header.height + 1;
    // Enough rounds to reach every delegate; PoS rounds are hash draws, so
    // a holder with any stake is reached quickly in practice.
    std::uint64_t limit = config.mode == ConsensusMode::DPoS ? config.delegates.size() : 4096;
    for (std::uint64_t k = 0; k < limit; ++k) {
        if (config.mode == ConsensusMode::PoS) {
            if (std::get<PosProof>(pos_select(tip.block_hash, config.stakes, static_cast<std::uint32_t>(k))).selected ==
                self)
                return k;
        } else if (std::get<DposProof>(dpos_producer(height, config.delegates, k)).producer == self) {
            return k;
        }
    }
    return std::nullopt;
}

std::optional<std::uint64_t> LedgerNode::produce_block() {
    Block tip;
    std::shared_ptr<const EhrState> state;
    std::vector<SignedTransaction> txs;
    {
        std::lock_guard lock(mu_);
        if (fatal_) throw StorageError(StorageErrc::Io, *fatal_);
        if (mempool_.empty()) return std::nullopt;
        tip = chain_.tip();
        state = state_;
        txs = mempool_.select(*state, options_.max_block_txs);
    }
    if (txs.empty()) return std::nullopt;
    const auto& config = state->consensus();

    ConsensusProof proof;
    std::int64_t earliest = tip.header.timestamp + 1;
    if (config.mode != ConsensusMode::PoW) {
        auto round = own_round(tip, config);
        if (!round) return std::nullopt;
        earliest = std::max<std::int64_t>(
            earliest, tip.header.timestamp + static_cast<std::int64_t>((*round + 1) * config.target_block_interval_ms));
        if (config.mode == ConsensusMode::PoS)
            proof = pos_select(tip.block_hash, config.stakes, static_cast<std::uint32_t>(*round));
        else
            proof = dpos_producer(tip.header.height + 1, config.delegates, *round);
    }
    auto now = options_.clock();
    if (now < earliest) {
        std::unique_lock lock(mu_);
        auto wait = std::chrono::milliseconds(earliest - now);
        cv_.wait_for(lock, wait, [&] { return stopping_.load(); });
        if (stopping_) return std::nullopt;
        now = std::max(options_.clock(), earliest);
    }
    auto ts = std::max(now, earliest);
    if (config.mode == ConsensusMode::PoW) {
        auto header = draft_header(tip, txs, options_.producer.address(), ts);
        proof = pow_mine(header_preimage(header), config.pow_difficulty_bits, 0);
    }
    auto block = assemble_block(tip, std::move(txs), options_.producer, proof, ts, config);

    ValidationOptions vo;
    vo.signature_cache = &sig_cache_;
    std::unique_lock lock(mu_);
    if (auto v = validate_block(block, &tip, config, *state, vo); !v)
        throw LedgerError("produced block rejected: " + v.reason().describe());
    auto next = std::make_shared<EhrState>(*state);
    auto audit_before = next->audit_log().size();
    apply_block(*next, block);
    try {
        store_.append(block, *next);
    } catch (const std::exception& e) {
        fatal_ = e.what();
        throw;
    }
    chain_.append(block);
    for (auto i = audit_before; i < next->audit_log().size(); ++i) {
        const auto& e = next->audit_log()[i];
        receipts_[e.tx_hash] = receipt_from_audit(e);
    }
    for (const auto& tx : block.transactions) {
        mempool_.remove(tx.tx_hash);
        if (auto q = queued_.find(tx.sender); q != queued_.end() && --q->second == 0) queued_.erase(q);
    }
    // Anything whose nonce the block consumed can no longer commit.
    for (const auto& tx : mempool_.items())
        if (tx.nonce < next->next_nonce(tx.sender)) receipts_[tx.tx_hash] = rejected(tx.tx_hash, "NonceMismatch");
    mempool_.prune(*next);
    queued_.clear();
    for (const auto& tx : mempool_.items()) ++queued_[tx.sender];
    state_ = std::move(next);
    auto h = chain_.height();
    cv_.notify_all();
    return h;
}

void LedgerNode::start() {
    if (running_) return;
    stopping_ = false;
    running_ = true;
    worker_ = std::thread([this] { run_loop(); });
}

void LedgerNode::stop() {
    stopping_ = true;
    cv_.notify_all();
    if (worker_.joinable()) worker_.join();
    running_ = false;
}

void LedgerNode::run_loop() {
    while (!stopping_) {
        {
            std::unique_lock lock(mu_);
            cv_.wait_for(lock, std::chrono::milliseconds(200), [&] { return stopping_ || !mempool_.empty(); });
            if (stopping_) break;
            if (mempool_.empty()) continue;
        }
        try {
            if (!produce_block()) std::this_thread::sleep_for(std::chrono::milliseconds(10));
        } catch (const std::exception& e) {
            std::lock_guard lock(mu_);
            if (!fatal_) fatal_ = e.what();
            break;
        }
    }
    running_ = false;
}

bool LedgerNode::wait_for_height(std::uint64_t height, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mu_);
    return cv_.wait_for(lock, timeout, [&] { return chain_.height() >= height || fatal_.has_value(); }) &&
           chain_.height() >= height;
}

}  // namespace medledger
