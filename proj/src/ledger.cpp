#include "medledger/ledger.hpp"

#include <algorithm>
#include <map>

namespace medledger {

std::string_view to_string(BlockRejectKind k) {
    switch (k) {
        case BlockRejectKind::Malformed: return "Malformed";
        case BlockRejectKind::BadHeight: return "BadHeight";
        case BlockRejectKind::BrokenHashLink: return "BrokenHashLink";
        case BlockRejectKind::BadBlockHash: return "BadBlockHash";
        case BlockRejectKind::BadProducerSignature: return "BadProducerSignature";
        case BlockRejectKind::BadProof: return "BadProof";
        case BlockRejectKind::BadTxRoot: return "BadTxRoot";
        case BlockRejectKind::InvalidTx: return "InvalidTx";
        case BlockRejectKind::BadTimestamp: return "BadTimestamp";
        case BlockRejectKind::BadGenesis: return "BadGenesis";
    }
    return "Unknown";
}

std::string BlockReject::describe() const {
    std::string out(to_string(kind));
    if (kind == BlockRejectKind::InvalidTx)
        out += "(" + std::to_string(tx_index) + ", " + std::string(to_string(tx_reason)) + ")";
    if (!detail.empty()) out += ": " + detail;
    return out;
}

Bytes header_preimage(const BlockHeader& h) {
    Writer w;
    w.str("medledger.block.v1").u64(h.height).fixed(h.prev_hash).i64(h.timestamp).fixed(h.producer.bytes).fixed(h.tx_root);
    return std::move(w).take();
}

Bytes header_bytes(const BlockHeader& h) {
    Writer w;
    w.raw(header_preimage(h));
    encode(w, h.proof);
    return std::move(w).take();
}

Digest compute_block_hash(const BlockHeader& h) { return sha256(header_bytes(h)); }

Digest compute_tx_root(std::span<const SignedTransaction> txs) {
    Bytes concat;
    concat.reserve(txs.size() * Digest::size());
    for (const auto& tx : txs) concat.insert(concat.end(), tx.tx_hash.data.begin(), tx.tx_hash.data.end());
    return sha256(concat);
}

ProofSubject proof_subject(const BlockHeader& h) {
    return ProofSubject{h.height, h.prev_hash, h.producer, header_preimage(h)};
}

Bytes encode_block(const Block& b) {
    Writer w;
    const auto& h = b.header;
    w.u64(h.height).fixed(h.prev_hash).i64(h.timestamp).fixed(h.producer.bytes).fixed(h.tx_root);
    encode(w, h.proof);
    w.fixed(b.producer_key).fixed(b.producer_signature);
    w.u32(static_cast<std::uint32_t>(b.transactions.size()));
    for (const auto& tx : b.transactions) encode(w, tx);
    w.fixed(b.block_hash);
    return std::move(w).take();
}

Block decode_block(ByteView bytes) {
    Reader r(bytes);
    Block b;
    auto& h = b.header;
    h.height = r.u64();
    h.prev_hash = r.fixed<32>();
    h.timestamp = r.i64();
    h.producer.bytes = r.fixed<20>();
    h.tx_root = r.fixed<32>();
    h.proof = decode_proof(r);
    b.producer_key = r.fixed<32>();
    b.producer_signature = r.fixed<64>();
    auto n = r.u32();
    // Each transaction needs at least 136 bytes; bound the reservation.
    if (n > r.remaining() / 136 + 1) throw DecodeError("transaction count exceeds block size");
    b.transactions.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) b.transactions.push_back(decode_transaction(r));
    b.block_hash = r.fixed<32>();
    r.expect_end();
    return b;
}

BlockHeader draft_header(const Block& parent, std::span<const SignedTransaction> txs, const Address& producer,
                         std::int64_t timestamp) {
    BlockHeader h;
    h.height = parent.header.height + 1;
    h.prev_hash = parent.block_hash;
    h.timestamp = timestamp;
    h.producer = producer;
    h.tx_root = compute_tx_root(txs);
    return h;
}

Block assemble_block(const Block& parent, std::vector<SignedTransaction> transactions, const KeyPair& producer,
                     const ConsensusProof& proof, std::int64_t timestamp, const ConsensusConfig& config) {
    if (timestamp <= parent.header.timestamp)
        throw LedgerError("block timestamp " + std::to_string(timestamp) + " does not advance past parent " +
                          std::to_string(parent.header.timestamp));
    Block b;
    b.header = draft_header(parent, transactions, producer.address(), timestamp);
    b.header.proof = proof;
    if (auto v = verify_proof(proof_subject(b.header), proof, config); !v)
        throw LedgerError("invalid consensus proof: " + std::string(to_string(v.reason())));
    b.transactions = std::move(transactions);
    b.block_hash = compute_block_hash(b.header);
    b.producer_key = producer.public_key();
    b.producer_signature = producer.sign(b.block_hash.view());
    return b;
}

Digest GenesisSpec::hash() const {
    Writer w;
    w.str("medledger.genesis.v1").str(chain_id).i64(timestamp).fixed(admin.bytes).fixed(admin_key);
    encode(w, admin_profile);
    encode(w, consensus);
    encode(w, system);
    return sha256(w.data());
}

namespace {
ConsensusProof genesis_proof(ConsensusMode mode) {
    switch (mode) {
        case ConsensusMode::PoW: return PowProof{};
        case ConsensusMode::PoS: return PosProof{};
        case ConsensusMode::DPoS: return DposProof{};
    }
    return PowProof{};
}
}  // namespace

Block make_genesis_block(const GenesisSpec& spec) {
    if (address_of(spec.admin_key) != spec.admin)
        throw LedgerError("genesis admin address does not match the admin public key");
    spec.consensus.validate();
    if (!spec.system.valid()) throw LedgerError("genesis system variables are invalid");

    cmd::Genesis g{spec.chain_id, spec.admin, spec.admin_key, spec.admin_profile, spec.consensus, spec.system,
                   spec.hash()};
    SignedTransaction tx;
    tx.sender = Address::zero();
    tx.nonce = 0;
    tx.command = encode_command(g);
    tx.timestamp = spec.timestamp;
    tx.tx_hash = compute_tx_hash(tx);

    Block b;
    b.header.height = 0;
    b.header.timestamp = spec.timestamp;
    b.header.producer = Address::zero();
    b.transactions.push_back(std::move(tx));
    b.header.tx_root = compute_tx_root(b.transactions);
    b.header.proof = genesis_proof(spec.consensus.mode);
    b.block_hash = compute_block_hash(b.header);
    return b;
}

namespace {

using BV = Verdict<BlockReject>;

BV reject(BlockRejectKind kind, std::string detail = {}) {
    BlockReject r;
    r.kind = kind;
    r.detail = std::move(detail);
    return BV::reject(std::move(r));
}

BV reject_tx(std::size_t index, TxReject reason) {
    BlockReject r;
    r.kind = BlockRejectKind::InvalidTx;
    r.tx_index = index;
    r.tx_reason = reason;
    return BV::reject(std::move(r));
}

BV validate_genesis(const Block& block, const EhrState& state) {
    const auto& h = block.header;
    if (h.height != 0) return reject(BlockRejectKind::BadHeight, "genesis must have height 0");
    if (!h.prev_hash.is_zero()) return reject(BlockRejectKind::BrokenHashLink, "genesis prev_hash must be zero");
    if (compute_block_hash(h) != block.block_hash) return reject(BlockRejectKind::BadBlockHash);
    if (!h.producer.is_zero() || !block.producer_key.is_zero() || !block.producer_signature.is_zero())
        return reject(BlockRejectKind::BadGenesis, "genesis carries no producer");
    if (compute_tx_root(block.transactions) != h.tx_root) return reject(BlockRejectKind::BadTxRoot);
    if (block.transactions.size() != 1) return reject(BlockRejectKind::BadGenesis, "genesis holds exactly one tx");
    const auto& tx = block.transactions.front();
    if (!tx.sender.is_zero() || tx.nonce != 0 || !tx.signature.is_zero())
        return reject(BlockRejectKind::BadGenesis, "genesis tx must be unsigned from the zero address");
    if (compute_tx_hash(tx) != tx.tx_hash) return reject_tx(0, TxReject::BadHash);
    if (state.initialized()) return reject(BlockRejectKind::BadGenesis, "state already initialised");
    try {
        auto c = decode_command(tx.command);
        const auto* g = std::get_if<cmd::Genesis>(&c);
        if (!g) return reject(BlockRejectKind::BadGenesis, "genesis tx must carry the genesis command");
        if (address_of(g->admin_key) != g->admin)
            return reject(BlockRejectKind::BadGenesis, "admin address does not match key");
        g->consensus.validate();
        if (h.proof != genesis_proof(g->consensus.mode))
            return reject(BlockRejectKind::BadGenesis, "unexpected genesis proof");
        if (tx.timestamp != h.timestamp) return reject(BlockRejectKind::BadGenesis, "timestamp mismatch");
        GenesisSpec spec{g->chain_id, h.timestamp, g->admin, g->admin_key, g->admin_profile, g->consensus, g->system};
        if (spec.hash() != g->spec_hash) return reject(BlockRejectKind::BadGenesis, "spec hash mismatch");
    } catch (const DecodeError& e) {
        return reject(BlockRejectKind::BadGenesis, e.what());
    } catch (const ConsensusError& e) {
        return reject(BlockRejectKind::BadGenesis, e.what());
    }
    return BV::accept();
}

}  // namespace

BV validate_block_structure(const Block& block, const Block& parent, const ConsensusConfig& config,
                            const ValidationOptions& options) {
    const auto& h = block.header;
    if (h.height != parent.header.height + 1) return reject(BlockRejectKind::BadHeight);
    if (h.prev_hash != parent.block_hash) return reject(BlockRejectKind::BrokenHashLink);
    if (compute_block_hash(h) != block.block_hash) return reject(BlockRejectKind::BadBlockHash);
    if (address_of(block.producer_key) != h.producer ||
        !verify(block.producer_key, block.block_hash.view(), block.producer_signature))
        return reject(BlockRejectKind::BadProducerSignature);
    if (compute_tx_root(block.transactions) != h.tx_root) return reject(BlockRejectKind::BadTxRoot);

    if (h.timestamp <= parent.header.timestamp) return reject(BlockRejectKind::BadTimestamp, "not after parent");
    if (options.now_ms && h.timestamp > *options.now_ms + kClockSkewToleranceMs)
        return reject(BlockRejectKind::BadTimestamp, "too far in the future");

    if (auto v = verify_proof(proof_subject(h), h.proof, config); !v)
        return reject(BlockRejectKind::BadProof, std::string(to_string(v.reason())));

    // Slot-scheduled modes: round k may only be used (k+1) intervals after
    // the parent, so fallback producers cannot pre-empt the scheduled one.
    if (config.mode != ConsensusMode::PoW) {
        auto round = proof_round(h.proof, h.height);
        auto earliest = parent.header.timestamp +
                        static_cast<std::int64_t>((round + 1) * config.target_block_interval_ms);
        if (h.timestamp < earliest) return reject(BlockRejectKind::BadTimestamp, "round claimed too early");
    }
    return BV::accept();
}

BV validate_block(const Block& block, const Block* parent, const ConsensusConfig& config, const EhrState& state,
                  const ValidationOptions& options) {
    if (!parent) return validate_genesis(block, state);
    if (auto v = validate_block_structure(block, *parent, config, options); !v) return v;

    std::map<Address, std::uint64_t> in_block_nonce;
    std::map<Address, PublicKey> in_block_keys;
    for (std::size_t i = 0; i < block.transactions.size(); ++i) {
        const auto& tx = block.transactions[i];
        std::optional<PublicKey> key;
        if (auto it = in_block_keys.find(tx.sender); it != in_block_keys.end())
            key = it->second;
        else
            key = state.sender_key(tx);
        if (!key) return reject_tx(i, TxReject::UnknownSender);
        in_block_keys.emplace(tx.sender, *key);

        bool cached = options.signature_cache && options.signature_cache->contains(tx);
        if (!cached) {
            if (auto v = check_transaction_integrity(tx, *key); !v) return reject_tx(i, v.reason());
            if (options.signature_cache) options.signature_cache->insert(tx);
        } else if (address_of(*key) != tx.sender) {
            return reject_tx(i, TxReject::BadSignature);
        }

        auto [it, inserted] = in_block_nonce.try_emplace(tx.sender, state.next_nonce(tx.sender));
        if (tx.nonce != it->second) return reject_tx(i, TxReject::NonceMismatch);
        ++it->second;
    }
    return BV::accept();
}

void apply_block(EhrState& state, const Block& block) {
    for (const auto& tx : block.transactions) state.apply(tx, block.header.height, block.header.timestamp);
}

Chain::Chain(Block genesis) { blocks_.push_back(std::move(genesis)); }

void Chain::append(Block b) {
    if (blocks_.empty()) {
        if (b.header.height != 0) throw LedgerError("first block must be genesis");
    } else if (b.header.height != tip().header.height + 1 || b.header.prev_hash != tip().block_hash) {
        throw LedgerError("block " + std::to_string(b.header.height) + " does not extend the tip");
    }
    blocks_.push_back(std::move(b));
}

bool better_tip(std::uint64_t height_a, const Digest& tip_a, std::uint64_t height_b, const Digest& tip_b) {
    if (height_a != height_b) return height_a > height_b;
    return tip_a < tip_b;
}

const Chain& fork_choice(std::span<const Chain> candidates) {
    const Chain* best = nullptr;
    for (const auto& c : candidates) {
        if (c.empty()) continue;
        if (!best || better_tip(c.height(), c.tip_hash(), best->height(), best->tip_hash())) best = &c;
    }
    if (!best) throw LedgerError("fork choice: no valid candidate chain");
    return *best;
}

Verdict<BlockReject> validate_chain(const Chain& chain, EhrState* final_state, const ValidationOptions& options) {
    if (chain.empty()) return reject(BlockRejectKind::BadGenesis, "empty chain");
    EhrState state;
    const auto& blocks = chain.blocks();
    if (auto v = validate_block(blocks[0], nullptr, ConsensusConfig{}, state, options); !v) return v;
    apply_block(state, blocks[0]);
    for (std::size_t i = 1; i < blocks.size(); ++i) {
        if (auto v = validate_block(blocks[i], &blocks[i - 1], state.consensus(), state, options); !v) return v;
        apply_block(state, blocks[i]);
    }
    if (final_state) *final_state = std::move(state);
    return BV::accept();
}

}  // namespace medledger
