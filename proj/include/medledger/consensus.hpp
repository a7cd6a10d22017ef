#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "medledger/crypto.hpp"
#include "medledger/verdict.hpp"

namespace medledger {

enum class ConsensusMode : std::uint8_t { PoW = 0, PoS = 1, DPoS = 2 };

std::string_view to_string(ConsensusMode mode);
ConsensusMode parse_consensus_mode(std::string_view text);  // pow | pos | dpos, case-insensitive

struct ConsensusConfig {
    ConsensusMode mode = ConsensusMode::PoW;
    std::uint32_t pow_difficulty_bits = 0;
    std::map<Address, std::uint64_t> stakes;
    std::vector<Address> delegates;
    std::uint64_t target_block_interval_ms = 1000;

    // Throws ConsensusError(InvalidConfig) when mode-relevant fields are missing.
    void validate() const;
    std::uint64_t total_stake() const;
    bool operator==(const ConsensusConfig&) const = default;
};

void encode(Writer& w, const ConsensusConfig& c);
ConsensusConfig decode_consensus_config(Reader& r);

struct PowProof {
    std::uint64_t nonce = 0;
    bool operator==(const PowProof&) const = default;
};

// round 0 uses the parent hash as the seed; later rounds are fallbacks that
// become valid one block interval after the previous round.
struct PosProof {
    std::uint32_t round = 0;
    Digest seed;
    Address selected;
    bool operator==(const PosProof&) const = default;
};

// slot = height + round; the producer is delegates[slot mod n].
struct DposProof {
    std::uint64_t slot = 0;
    Address producer;
    bool operator==(const DposProof&) const = default;
};

using ConsensusProof = std::variant<PowProof, PosProof, DposProof>;

ConsensusMode mode_of(const ConsensusProof& proof);
// Number of fallback rounds this proof claims (0 for PoW).
std::uint64_t proof_round(const ConsensusProof& proof, std::uint64_t height);

void encode(Writer& w, const ConsensusProof& p);
ConsensusProof decode_proof(Reader& r);

enum class ConsensusErrc { SearchExhausted, EmptyStakes, EmptyDelegates, InvalidConfig, DifficultyTooHigh };

class ConsensusError : public std::runtime_error {
public:
    ConsensusError(ConsensusErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ConsensusErrc code() const { return code_; }

private:
    ConsensusErrc code_;
};

inline constexpr std::uint32_t kMaxPowDifficultyBits = 32;

std::uint32_t leading_zero_bits(const Digest& d);

// SHA-256(preimage || nonce_be64).
Digest pow_hash(ByteView preimage, std::uint64_t nonce);

// Returns the first nonce >= nonce_start whose pow_hash has at least
// difficulty_bits leading zero bits. Attempts = nonce - nonce_start + 1.
ConsensusProof pow_mine(ByteView preimage, std::uint32_t difficulty_bits, std::uint64_t nonce_start,
                        std::uint64_t max_attempts = std::uint64_t{1} << 40);

Digest pos_seed(const Digest& prev_block_hash, std::uint32_t round);
// r = SHA-256(seed) as a big-endian integer mod total stake, mapped onto the
// cumulative stake intervals in ascending address order.
Address select_stakeholder(const Digest& seed, const std::map<Address, std::uint64_t>& stakes);
ConsensusProof pos_select(const Digest& prev_block_hash, const std::map<Address, std::uint64_t>& stakes,
                          std::uint32_t round = 0);

ConsensusProof dpos_producer(std::uint64_t height, const std::vector<Address>& delegates, std::uint64_t round = 0);

enum class ProofReject { WrongMode, InsufficientWork, WrongStakeholder, WrongSlotProducer, BadSeed };
std::string_view to_string(ProofReject r);

// What a proof commits to: every header field except the proof itself.
struct ProofSubject {
    std::uint64_t height = 0;
    Digest prev_hash;
    Address producer;
    Bytes preimage;  // canonical header bytes without the proof
};

Verdict<ProofReject> verify_proof(const ProofSubject& header, const ConsensusProof& proof,
                                  const ConsensusConfig& config);

}  // namespace medledger
