#include "medledger/consensus.hpp"

#include <sodium.h>

#include <algorithm>
#include <cctype>

namespace medledger {

std::string_view to_string(ConsensusMode mode) {
    switch (mode) {
        case ConsensusMode::PoW: return "pow";
        case ConsensusMode::PoS: return "pos";
        case ConsensusMode::DPoS: return "dpos";
    }
    return "unknown";
}

ConsensusMode parse_consensus_mode(std::string_view text) {
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "pow") return ConsensusMode::PoW;
    if (lower == "pos") return ConsensusMode::PoS;
    if (lower == "dpos") return ConsensusMode::DPoS;
    throw ConsensusError(ConsensusErrc::InvalidConfig, "unknown consensus mode '" + std::string(text) + "'");
}

std::string_view to_string(ProofReject r) {
    switch (r) {
        case ProofReject::WrongMode: return "WrongMode";
        case ProofReject::InsufficientWork: return "InsufficientWork";
        case ProofReject::WrongStakeholder: return "WrongStakeholder";
        case ProofReject::WrongSlotProducer: return "WrongSlotProducer";
        case ProofReject::BadSeed: return "BadSeed";
    }
    return "Unknown";
}

void ConsensusConfig::validate() const {
    if (target_block_interval_ms == 0)
        throw ConsensusError(ConsensusErrc::InvalidConfig, "target_block_interval_ms must be positive");
    switch (mode) {
        case ConsensusMode::PoW:
            if (pow_difficulty_bits > kMaxPowDifficultyBits)
                throw ConsensusError(ConsensusErrc::DifficultyTooHigh, "pow_difficulty_bits must be <= 32");
            break;
        case ConsensusMode::PoS:
            if (stakes.empty()) throw ConsensusError(ConsensusErrc::EmptyStakes, "PoS requires at least one stake");
            for (const auto& [addr, stake] : stakes)
                if (stake == 0)
                    throw ConsensusError(ConsensusErrc::InvalidConfig, "stake for " + addr.str() + " must be positive");
            break;
        case ConsensusMode::DPoS:
            if (delegates.empty())
                throw ConsensusError(ConsensusErrc::EmptyDelegates, "DPoS requires at least one delegate");
            break;
    }
}

std::uint64_t ConsensusConfig::total_stake() const {
    std::uint64_t total = 0;
    for (const auto& [_, s] : stakes) total += s;
    return total;
}

void encode(Writer& w, const ConsensusConfig& c) {
    w.u8(static_cast<std::uint8_t>(c.mode));
    w.u32(c.pow_difficulty_bits);
    w.u32(static_cast<std::uint32_t>(c.stakes.size()));
    for (const auto& [addr, stake] : c.stakes) {
        w.fixed(addr.bytes);
        w.u64(stake);
    }
    w.u32(static_cast<std::uint32_t>(c.delegates.size()));
    for (const auto& d : c.delegates) w.fixed(d.bytes);
    w.u64(c.target_block_interval_ms);
}

namespace {
ConsensusMode decode_mode(std::uint8_t tag) {
    if (tag > 2) throw DecodeError("invalid consensus mode tag");
    return static_cast<ConsensusMode>(tag);
}
Address read_address(Reader& r) {
    Address a;
    a.bytes = r.fixed<20>();
    return a;
}
}  // namespace

ConsensusConfig decode_consensus_config(Reader& r) {
    ConsensusConfig c;
    c.mode = decode_mode(r.u8());
    c.pow_difficulty_bits = r.u32();
    auto n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
        auto a = read_address(r);
        if (!c.stakes.empty() && !(c.stakes.rbegin()->first < a))
            throw DecodeError("stakes not in canonical order");
        c.stakes.emplace(a, r.u64());
    }
    auto m = r.u32();
    for (std::uint32_t i = 0; i < m; ++i) c.delegates.push_back(read_address(r));
    c.target_block_interval_ms = r.u64();
    return c;
}

ConsensusMode mode_of(const ConsensusProof& proof) { return static_cast<ConsensusMode>(proof.index()); }

std::uint64_t proof_round(const ConsensusProof& proof, std::uint64_t height) {
    if (auto* p = std::get_if<PosProof>(&proof)) return p->round;
    if (auto* d = std::get_if<DposProof>(&proof)) return d->slot >= height ? d->slot - height : 0;
    return 0;
}

void encode(Writer& w, const ConsensusProof& p) {
    w.u8(static_cast<std::uint8_t>(p.index()));
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, PowProof>) {
                w.u64(v.nonce);
            } else if constexpr (std::is_same_v<T, PosProof>) {
                w.u32(v.round);
                w.fixed(v.seed);
                w.fixed(v.selected.bytes);
            } else {
                w.u64(v.slot);
                w.fixed(v.producer.bytes);
            }
        },
        p);
}

ConsensusProof decode_proof(Reader& r) {
    switch (decode_mode(r.u8())) {
        case ConsensusMode::PoW: return PowProof{r.u64()};
        case ConsensusMode::PoS: {
            PosProof p;
            p.round = r.u32();
            p.seed = r.fixed<32>();
            p.selected = read_address(r);
            return p;
        }
        case ConsensusMode::DPoS: {
            DposProof p;
            p.slot = r.u64();
            p.producer = read_address(r);
            return p;
        }
    }
    throw DecodeError("unreachable proof mode");
}

std::uint32_t leading_zero_bits(const Digest& d) {
    std::uint32_t bits = 0;
    for (auto byte : d.data) {
        if (byte == 0) {
            bits += 8;
            continue;
        }
        for (int i = 7; i >= 0 && !(byte & (1u << i)); --i) ++bits;
        break;
    }
    return bits;
}

namespace {
std::array<std::uint8_t, 8> be64(std::uint64_t v) {
    std::array<std::uint8_t, 8> out{};
    for (int i = 7; i >= 0; --i, v >>= 8) out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(v);
    return out;
}
}  // namespace

Digest pow_hash(ByteView preimage, std::uint64_t nonce) {
    Writer w;
    w.raw(preimage).u64(nonce);
    return sha256(w.data());
}

ConsensusProof pow_mine(ByteView preimage, std::uint32_t difficulty_bits, std::uint64_t nonce_start,
                        std::uint64_t max_attempts) {
    if (difficulty_bits > kMaxPowDifficultyBits)
        throw ConsensusError(ConsensusErrc::DifficultyTooHigh, "difficulty above desk-scale limit of 32 bits");
    (void)sha256(ByteView{});  // initialises libsodium

    // Absorb the preimage once; each attempt only hashes the nonce suffix.
    crypto_hash_sha256_state base;
    crypto_hash_sha256_init(&base);
    crypto_hash_sha256_update(&base, preimage.data(), preimage.size());

    std::uint64_t nonce = nonce_start;
    for (std::uint64_t attempt = 0; attempt < max_attempts; ++attempt, ++nonce) {
        crypto_hash_sha256_state st = base;
        auto suffix = be64(nonce);
        crypto_hash_sha256_update(&st, suffix.data(), suffix.size());
        Digest d;
        crypto_hash_sha256_final(&st, d.data.data());
        if (leading_zero_bits(d) >= difficulty_bits) return PowProof{nonce};
    }
    throw ConsensusError(ConsensusErrc::SearchExhausted,
                         "no qualifying nonce within " + std::to_string(max_attempts) + " attempts");
}

Digest pos_seed(const Digest& prev_block_hash, std::uint32_t round) {
    if (round == 0) return prev_block_hash;
    Writer w;
    w.fixed(prev_block_hash).u32(round);
    return sha256(w.data());
}

Address select_stakeholder(const Digest& seed, const std::map<Address, std::uint64_t>& stakes) {
    if (stakes.empty()) throw ConsensusError(ConsensusErrc::EmptyStakes, "no stakeholders");
    std::uint64_t total = 0;
    for (const auto& [_, s] : stakes) total += s;
    if (total == 0) throw ConsensusError(ConsensusErrc::EmptyStakes, "total stake is zero");

    auto h = sha256(seed.view());
    unsigned __int128 r = 0;
    for (auto byte : h.data) r = ((r << 8) | byte) % total;
    auto target = static_cast<std::uint64_t>(r);

    std::uint64_t cumulative = 0;
    for (const auto& [addr, stake] : stakes) {
        cumulative += stake;
        if (target < cumulative) return addr;
    }
    return stakes.rbegin()->first;
}

ConsensusProof pos_select(const Digest& prev_block_hash, const std::map<Address, std::uint64_t>& stakes,
                          std::uint32_t round) {
    PosProof p;
    p.round = round;
    p.seed = pos_seed(prev_block_hash, round);
    p.selected = select_stakeholder(p.seed, stakes);
    return p;
}

ConsensusProof dpos_producer(std::uint64_t height, const std::vector<Address>& delegates, std::uint64_t round) {
    if (delegates.empty()) throw ConsensusError(ConsensusErrc::EmptyDelegates, "no delegates");
    DposProof p;
    p.slot = height + round;
    p.producer = delegates[p.slot % delegates.size()];
    return p;
}

Verdict<ProofReject> verify_proof(const ProofSubject& header, const ConsensusProof& proof,
                                  const ConsensusConfig& config) {
    using V = Verdict<ProofReject>;
    if (mode_of(proof) != config.mode) return V::reject(ProofReject::WrongMode);

    switch (config.mode) {
        case ConsensusMode::PoW: {
            const auto& p = std::get<PowProof>(proof);
            if (leading_zero_bits(pow_hash(header.preimage, p.nonce)) < config.pow_difficulty_bits)
                return V::reject(ProofReject::InsufficientWork);
            return V::accept();
        }
        case ConsensusMode::PoS: {
            const auto& p = std::get<PosProof>(proof);
            if (config.stakes.empty()) return V::reject(ProofReject::WrongStakeholder);
            if (p.seed != pos_seed(header.prev_hash, p.round)) return V::reject(ProofReject::BadSeed);
            auto expected = select_stakeholder(p.seed, config.stakes);
            if (p.selected != expected || header.producer != expected)
                return V::reject(ProofReject::WrongStakeholder);
            return V::accept();
        }
        case ConsensusMode::DPoS: {
            const auto& p = std::get<DposProof>(proof);
            if (config.delegates.empty() || p.slot < header.height) return V::reject(ProofReject::WrongSlotProducer);
            const auto& expected = config.delegates[p.slot % config.delegates.size()];
            if (p.producer != expected || header.producer != expected)
                return V::reject(ProofReject::WrongSlotProducer);
            return V::accept();
        }
    }
    return V::reject(ProofReject::WrongMode);
}

}  // namespace medledger
