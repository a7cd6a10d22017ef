#pragma once

// Blocks, hash-chain validation and fork choice.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "medledger/consensus.hpp"
#include "medledger/ehr_state.hpp"
#include "medledger/transaction.hpp"

namespace medledger {

struct BlockHeader {
    std::uint64_t height = 0;
    Digest prev_hash;
    std::int64_t timestamp = 0;
    Address producer;
    Digest tx_root;
    ConsensusProof proof;
    bool operator==(const BlockHeader&) const = default;
};

// The producer signs block_hash so that PoS/DPoS slots cannot be claimed
// by anyone but the scheduled key. Genesis carries no signature.
struct Block {
    BlockHeader header;
    PublicKey producer_key;
    Signature producer_signature;
    std::vector<SignedTransaction> transactions;
    Digest block_hash;

    std::uint64_t height() const { return header.height; }
    bool operator==(const Block&) const = default;
};

// Header bytes without the proof; what PoW mines over.
Bytes header_preimage(const BlockHeader& h);
Bytes header_bytes(const BlockHeader& h);
Digest compute_block_hash(const BlockHeader& h);
// SHA-256 over the concatenated tx hashes, in order.
Digest compute_tx_root(std::span<const SignedTransaction> txs);
ProofSubject proof_subject(const BlockHeader& h);

Bytes encode_block(const Block& b);
Block decode_block(ByteView bytes);  // throws DecodeError; rejects trailing bytes

class LedgerError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Header fields for a block that still needs a consensus proof.
BlockHeader draft_header(const Block& parent, std::span<const SignedTransaction> txs, const Address& producer,
                         std::int64_t timestamp);

// Throws LedgerError when the proof is invalid for the header or the
// timestamp does not advance past the parent.
Block assemble_block(const Block& parent, std::vector<SignedTransaction> transactions, const KeyPair& producer,
                     const ConsensusProof& proof, std::int64_t timestamp, const ConsensusConfig& config);

struct GenesisSpec {
    std::string chain_id;
    std::int64_t timestamp = 0;
    Address admin;
    PublicKey admin_key;
    Profile admin_profile;
    ConsensusConfig consensus;
    SystemVars system;

    Digest hash() const;
};

Block make_genesis_block(const GenesisSpec& spec);

enum class BlockRejectKind {
    Malformed,
    BadHeight,
    BrokenHashLink,
    BadBlockHash,
    BadProducerSignature,
    BadProof,
    BadTxRoot,
    InvalidTx,
    BadTimestamp,
    BadGenesis,
};
std::string_view to_string(BlockRejectKind k);

struct BlockReject {
    BlockRejectKind kind = BlockRejectKind::Malformed;
    std::size_t tx_index = 0;           // InvalidTx only
    TxReject tx_reason = TxReject::BadSignature;  // InvalidTx only
    std::string detail;

    std::string describe() const;
};

// Remembers transactions whose signature and hash already checked out,
// keyed by a digest of the full encoded transaction.
class SignatureCache {
public:
    bool contains(const SignedTransaction& tx) const { return verified_.contains(key(tx)); }
    void insert(const SignedTransaction& tx) { verified_.insert(key(tx)); }
    std::size_t size() const { return verified_.size(); }

private:
    static std::string key(const SignedTransaction& tx) {
        Writer w;
        encode(w, tx);
        auto d = sha256(w.data());
        return std::string(d.data.begin(), d.data.end());
    }
    std::unordered_set<std::string> verified_;
};

inline constexpr std::int64_t kClockSkewToleranceMs = 5000;

struct ValidationOptions {
    // Local clock for the future-timestamp check; unset skips it.
    std::optional<std::int64_t> now_ms;
    SignatureCache* signature_cache = nullptr;
};

// `state` must be the contract state after applying `parent`. Pass a null
// parent to validate a genesis block.
Verdict<BlockReject> validate_block(const Block& block, const Block* parent, const ConsensusConfig& config,
                                    const EhrState& state, const ValidationOptions& options = {});

// Checks that need no contract state: height, links, hashes, producer
// signature, proof and timestamps. Transaction signatures and nonces are
// left to validate_block.
Verdict<BlockReject> validate_block_structure(const Block& block, const Block& parent, const ConsensusConfig& config,
                                              const ValidationOptions& options = {});

// Applies every transaction of an already-validated block.
void apply_block(EhrState& state, const Block& block);

// Appends-only sequence of blocks from genesis.
class Chain {
public:
    Chain() = default;
    explicit Chain(Block genesis);

    const std::vector<Block>& blocks() const { return blocks_; }
    const Block& tip() const { return blocks_.back(); }
    const Digest& tip_hash() const { return blocks_.back().block_hash; }
    std::uint64_t height() const { return blocks_.back().header.height; }
    bool empty() const { return blocks_.empty(); }
    std::size_t size() const { return blocks_.size(); }
    const Block& at(std::uint64_t height) const { return blocks_.at(height); }

    // Checks the hash link and height only; full validation is the caller's job.
    void append(Block b);
    void truncate(std::size_t length) { blocks_.resize(length); }

private:
    std::vector<Block> blocks_;
};

// Longest wins; equal lengths go to the lexicographically smaller tip hash.
bool better_tip(std::uint64_t height_a, const Digest& tip_a, std::uint64_t height_b, const Digest& tip_b);

// Throws LedgerError when no candidate is non-empty.
const Chain& fork_choice(std::span<const Chain> candidates);

// Replays a full chain from genesis, validating every block.
Verdict<BlockReject> validate_chain(const Chain& chain, EhrState* final_state = nullptr,
                                    const ValidationOptions& options = {});

}  // namespace medledger
