#include <gtest/gtest.h>

#include "medledger/ledger.hpp"
#include "support.hpp"

using namespace medledger;
using test::Fixture;

namespace {

// States after each height of the fixture chain.
std::vector<EhrState> states_by_height(const Chain& chain) {
    std::vector<EhrState> out;
    EhrState s;
    for (const auto& b : chain.blocks()) {
        apply_block(s, b);
        out.push_back(s);
    }
    return out;
}

bool rejected_after_flip(const Bytes& encoded, std::size_t i, std::uint8_t mask, const Block& parent,
                         const ConsensusConfig& config, const EhrState& parent_state) {
    auto copy = encoded;
    copy[i] ^= mask;
    try {
        auto b = decode_block(copy);
        return !validate_block(b, &parent, config, parent_state);
    } catch (const DecodeError&) {
        return true;
    }
}

}  // namespace

TEST(Ledger, FixtureChainValidates) {
    Fixture f;
    EXPECT_EQ(f.chain.chain().height(), 10u);
    EhrState replayed;
    auto v = validate_chain(f.chain.chain(), &replayed);
    ASSERT_TRUE(v) << v.reason().describe();
    EXPECT_EQ(replayed.state_root(), f.chain.state().state_root());
    for (const auto& e : replayed.audit_log()) EXPECT_TRUE(e.allowed()) << to_string(e.op) << " " << to_string(*e.deny);
}

TEST(Ledger, BlockEncodingRoundTrips) {
    Fixture f;
    for (const auto& b : f.chain.chain().blocks()) {
        auto bytes = encode_block(b);
        EXPECT_EQ(decode_block(bytes), b);
        bytes.push_back(0);
        EXPECT_THROW(decode_block(bytes), DecodeError);
    }
}

// Every byte of every non-genesis block, including the transactions inside.
TEST(Ledger, ExhaustiveByteFlipIsRejected) {
    Fixture f;
    const auto& chain = f.chain.chain();
    auto states = states_by_height(chain);
    std::size_t checked = 0, rejected = 0;
    for (std::uint64_t h = 1; h <= chain.height(); ++h) {
        auto bytes = encode_block(chain.at(h));
        for (std::size_t i = 0; i < bytes.size(); ++i) {
            ++checked;
            if (rejected_after_flip(bytes, i, 0x01, chain.at(h - 1), f.chain.config(), states[h - 1]))
                ++rejected;
            else
                ADD_FAILURE() << "height " << h << " byte " << i << " accepted after flip";
        }
    }
    EXPECT_EQ(checked, rejected);
    EXPECT_GT(checked, 1000u);
}

TEST(Ledger, GenesisByteFlipIsRejected) {
    Fixture f;
    auto bytes = encode_block(f.chain.chain().at(0));
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        auto copy = bytes;
        copy[i] ^= 0x01;
        bool rejected = true;
        try {
            auto b = decode_block(copy);
            EhrState empty;
            rejected = !validate_block(b, nullptr, f.chain.config(), empty);
        } catch (const DecodeError&) {
        }
        EXPECT_TRUE(rejected) << "genesis byte " << i;
    }
}

TEST(Ledger, RejectKinds) {
    Fixture f;
    const auto& chain = f.chain.chain();
    auto states = states_by_height(chain);
    const auto& parent = chain.at(4);
    auto block = chain.at(5);
    const auto& cfg = f.chain.config();

    auto wrong_height = block;
    wrong_height.header.height = 7;
    EXPECT_EQ(validate_block(wrong_height, &parent, cfg, states[4]).reason().kind, BlockRejectKind::BadHeight);

    auto wrong_link = block;
    wrong_link.header.prev_hash = chain.at(3).block_hash;
    EXPECT_EQ(validate_block(wrong_link, &parent, cfg, states[4]).reason().kind, BlockRejectKind::BrokenHashLink);

    auto stale_hash = block;
    stale_hash.header.timestamp += 1;
    EXPECT_EQ(validate_block(stale_hash, &parent, cfg, states[4]).reason().kind, BlockRejectKind::BadBlockHash);

    auto dropped_tx = block;
    dropped_tx.transactions.clear();
    EXPECT_EQ(validate_block(dropped_tx, &parent, cfg, states[4]).reason().kind, BlockRejectKind::BadTxRoot);

    // Valid block against the wrong state: nonces no longer line up.
    auto r = validate_block(block, &parent, cfg, states[5]);
    ASSERT_FALSE(r);
    EXPECT_EQ(r.reason().kind, BlockRejectKind::InvalidTx);
    EXPECT_EQ(r.reason().tx_reason, TxReject::NonceMismatch);
}

TEST(Ledger, ForeignProducerCannotSignSlot) {
    Fixture f;
    const auto& parent = f.chain.chain().tip();
    auto proof = dpos_producer(parent.header.height + 1, f.chain.config().delegates);
    auto intruder = test::key("intruder");
    EXPECT_THROW(assemble_block(parent, {}, intruder, proof, parent.header.timestamp + 10, f.chain.config()),
                 LedgerError);
}

TEST(Ledger, TimestampRules) {
    Fixture f;
    const auto& cfg = f.chain.config();
    const auto& parent = f.chain.chain().tip();
    auto proof = dpos_producer(parent.header.height + 1, cfg.delegates);
    EXPECT_THROW(assemble_block(parent, {}, f.admin, proof, parent.header.timestamp, cfg), LedgerError);

    auto far = assemble_block(parent, {}, f.admin, proof, parent.header.timestamp + 60'000, cfg);
    ValidationOptions opts;
    opts.now_ms = parent.header.timestamp + 1000;
    EXPECT_EQ(validate_block_structure(far, parent, cfg, opts).reason().kind, BlockRejectKind::BadTimestamp);
    opts.now_ms = parent.header.timestamp + 60'000 - kClockSkewToleranceMs;
    EXPECT_TRUE(validate_block_structure(far, parent, cfg, opts));

    // Fallback round 1 is valid only one interval after round 0's earliest time.
    auto late_proof = dpos_producer(parent.header.height + 1, cfg.delegates, 1);
    auto early = assemble_block(parent, {}, f.admin, late_proof,
                                parent.header.timestamp + static_cast<std::int64_t>(cfg.target_block_interval_ms), cfg);
    EXPECT_EQ(validate_block_structure(early, parent, cfg).reason().kind, BlockRejectKind::BadTimestamp);
    auto ok = assemble_block(parent, {}, f.admin, late_proof,
                             parent.header.timestamp + 2 * static_cast<std::int64_t>(cfg.target_block_interval_ms), cfg);
    EXPECT_TRUE(validate_block_structure(ok, parent, cfg));
}

TEST(Ledger, ReplayedTransactionIsRejected) {
    Fixture f;
    const auto& chain = f.chain.chain();
    auto old_tx = chain.at(5).transactions.front();
    const auto& parent = chain.tip();
    auto b = assemble_block(parent, {old_tx}, f.admin, dpos_producer(parent.header.height + 1, f.chain.config().delegates),
                            f.chain.next_timestamp(), f.chain.config());
    auto r = validate_block(b, &parent, f.chain.config(), f.chain.state());
    ASSERT_FALSE(r);
    EXPECT_EQ(r.reason().tx_reason, TxReject::NonceMismatch);
}

TEST(Ledger, UnknownSenderIsRejected) {
    Fixture f;
    auto stranger = test::key("stranger");
    auto tx = build_transaction(stranger, 0, cmd::GrantAccess{f.doctor.address()}, f.chain.next_timestamp());
    const auto& parent = f.chain.chain().tip();
    auto b = assemble_block(parent, {tx}, f.admin, dpos_producer(parent.header.height + 1, f.chain.config().delegates),
                            f.chain.next_timestamp(), f.chain.config());
    EXPECT_EQ(validate_block(b, &parent, f.chain.config(), f.chain.state()).reason().tx_reason, TxReject::UnknownSender);
}

TEST(Ledger, PowAndPosChainsValidate) {
    for (auto mode : {ConsensusMode::PoW, ConsensusMode::PoS}) {
        auto admin = test::key("admin");
        test::ChainBuilder cb(admin, mode);
        auto p = test::key("p");
        cb.run(p, cmd::RegisterUser{Role::Patient, p.public_key(), {"P", "2000-01-01", ""}});
        cb.run(admin, cmd::SetUserStatus{p.address(), AccountStatus::Active});
        cb.add({});
        EXPECT_TRUE(validate_chain(cb.chain())) << to_string(mode);
    }
}

TEST(ForkChoice, LongestThenSmallestTipHash) {
    EXPECT_TRUE(better_tip(5, sha256("z"), 4, sha256("a")));
    EXPECT_FALSE(better_tip(4, sha256("a"), 5, sha256("z")));
    Digest lo, hi;
    hi.data[0] = 1;
    EXPECT_TRUE(better_tip(3, lo, 3, hi));
    EXPECT_FALSE(better_tip(3, hi, 3, lo));

    Fixture f;
    Chain shorter = f.chain.chain();
    shorter.truncate(6);
    std::vector<Chain> candidates{shorter, f.chain.chain()};
    EXPECT_EQ(fork_choice(candidates).tip_hash(), f.chain.chain().tip_hash());
    EXPECT_THROW(fork_choice(std::vector<Chain>{}), LedgerError);
}

// Brute-force oracle: the winner among random candidates is the maximum
// under (height desc, hash asc).
TEST(ForkChoice, MatchesSortOracle) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<std::pair<std::uint64_t, Digest>> c;
        for (int i = 0; i < 6; ++i) c.push_back({rng() % 4, sha256(std::to_string(rng() % 5))});
        auto best = c[0];
        for (const auto& x : c)
            if (better_tip(x.first, x.second, best.first, best.second)) best = x;
        auto sorted = c;
        std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        EXPECT_EQ(best, sorted.front());
    }
}
