#pragma once

// Shared fixtures: seed-derived keys, a single-producer chain builder and
// temporary directories.

#include <atomic>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <unistd.h>

#include "medledger/ehr_state.hpp"
#include "medledger/ledger.hpp"

namespace medledger::test {

inline KeyPair key(std::string_view label) {
    auto seed = sha256("medledger.test.key:" + std::string(label));
    return KeyPair::generate(seed.view());
}

inline constexpr std::int64_t kEpoch = 1'767'225'600'000;  // 2026-01-01T00:00:00Z

inline GenesisSpec genesis_spec(const KeyPair& admin, ConsensusMode mode = ConsensusMode::DPoS) {
    GenesisSpec spec;
    spec.chain_id = "medledger-test";
    spec.timestamp = kEpoch;
    spec.admin = admin.address();
    spec.admin_key = admin.public_key();
    spec.admin_profile.name = "Root Admin";
    spec.consensus.mode = mode;
    spec.consensus.pow_difficulty_bits = 4;
    spec.consensus.stakes[admin.address()] = 1;
    spec.consensus.delegates = {admin.address()};
    spec.consensus.target_block_interval_ms = 10;
    spec.system.start_date = parse_date("2026-01-01");
    return spec;
}

// Builds valid blocks with `producer` as the only delegate / staker.
class ChainBuilder {
public:
    explicit ChainBuilder(const KeyPair& admin, ConsensusMode mode = ConsensusMode::DPoS)
        : ChainBuilder(genesis_spec(admin, mode), admin) {}

    ChainBuilder(GenesisSpec spec, KeyPair producer) : spec_(std::move(spec)), producer_(std::move(producer)) {
        chain_ = Chain(make_genesis_block(spec_));
        apply_block(state_, chain_.tip());
    }

    const GenesisSpec& spec() const { return spec_; }
    const Chain& chain() const { return chain_; }
    const EhrState& state() const { return state_; }
    const ConsensusConfig& config() const { return spec_.consensus; }
    std::int64_t next_timestamp() const {
        return chain_.tip().header.timestamp + static_cast<std::int64_t>(spec_.consensus.target_block_interval_ms);
    }

    // Signs `c` with the sender's next nonce (tracked locally).
    SignedTransaction tx(const KeyPair& sender, const Command& c) {
        auto& n = nonces_[sender.address()];
        return build_transaction(sender, n++, c, next_timestamp());
    }

    SignedTransaction raw_tx(const KeyPair& sender, Bytes command) {
        auto& n = nonces_[sender.address()];
        return build_transaction(sender, n++, std::move(command), next_timestamp());
    }

    const Block& add(std::vector<SignedTransaction> txs) {
        const auto& parent = chain_.tip();
        auto ts = next_timestamp();
        ConsensusProof proof;
        switch (spec_.consensus.mode) {
            case ConsensusMode::PoW: {
                auto header = draft_header(parent, txs, producer_.address(), ts);
                proof = pow_mine(header_preimage(header), spec_.consensus.pow_difficulty_bits, 0);
                break;
            }
            case ConsensusMode::PoS: proof = pos_select(parent.block_hash, spec_.consensus.stakes, 0); break;
            case ConsensusMode::DPoS:
                proof = dpos_producer(parent.header.height + 1, spec_.consensus.delegates, 0);
                break;
        }
        auto block = assemble_block(parent, std::move(txs), producer_, proof, ts, spec_.consensus);
        apply_block(state_, block);
        chain_.append(std::move(block));
        return chain_.tip();
    }

    // One transaction per block; returns its audit entry.
    const AuditEntry& run(const KeyPair& sender, const Command& c) {
        add({tx(sender, c)});
        return state_.audit_log().back();
    }

private:
    GenesisSpec spec_;
    KeyPair producer_;
    Chain chain_;
    EhrState state_;
    std::map<Address, std::uint64_t> nonces_;
};

// Registers and activates accounts through real transactions.
struct Population {
    KeyPair admin = key("admin");
    ChainBuilder chain{admin};

    KeyPair add(std::string_view label, Role role, bool activate = true) {
        auto k = key(label);
        Profile p;
        p.name = std::string(label);
        if (role == Role::Doctor) p.specialty = "General";
        if (role == Role::Patient) p.birth_date = "1990-05-17";
        chain.run(k, cmd::RegisterUser{role, k.public_key(), p});
        if (activate) chain.run(admin, cmd::SetUserStatus{k.address(), AccountStatus::Active});
        return k;
    }
};

// A ten-block chain touching every clinical workflow, several txs per block.
struct Fixture {
    KeyPair admin = key("admin");
    KeyPair patient = key("patient");
    KeyPair patient2 = key("patient2");
    KeyPair doctor = key("doctor");
    ChainBuilder chain{admin};
    std::string record_text = "Chest X-ray: no acute findings. marker-5521";

    Fixture() {
        auto reg = [&](const KeyPair& k, Role r, const char* name) {
            Profile p;
            p.name = name;
            if (r == Role::Doctor) p.specialty = "Cardiology";
            else p.birth_date = "1985-03-02";
            return chain.tx(k, cmd::RegisterUser{r, k.public_key(), p});
        };
        chain.add({reg(patient, Role::Patient, "Ana Lima"), reg(doctor, Role::Doctor, "Dr. Ruiz"),
                   reg(patient2, Role::Patient, "Ben Ode")});
        chain.add({chain.tx(admin, cmd::SetUserStatus{patient.address(), AccountStatus::Active}),
                   chain.tx(admin, cmd::SetUserStatus{doctor.address(), AccountStatus::Active}),
                   chain.tx(admin, cmd::SetUserStatus{patient2.address(), AccountStatus::Active})});
        chain.add({chain.tx(admin, cmd::AddMedication{"Amoxicillin", "capsule", "500mg"}),
                   chain.tx(admin, cmd::AddLabParameter{"Glucose", "mg/dL", 70, 110})});
        chain.add({chain.tx(patient, cmd::GrantAccess{doctor.address()}),
                   chain.tx(patient, cmd::RequestAppointment{doctor.address(), {parse_date("2026-01-05"), 3}, "checkup"})});
        chain.add({chain.tx(doctor, cmd::UpdateAppointment{1, AppointmentAction::Confirm, {}, "confirmed"})});
        chain.add({chain.tx(doctor, cmd::Prescribe{1, 1, "1 capsule every 8h"})});
        chain.add({chain.tx(doctor, cmd::InputLabResult{patient.address(), 1, 123.5})});
        chain.add({chain.tx(doctor, cmd::AppendRecord{patient.address(),
                                                      seal(as_view(record_text), {patient.public_key(), doctor.public_key()}),
                                                      "imaging"})});
        chain.add({chain.tx(patient2, cmd::RequestAppointment{doctor.address(), {parse_date("2026-01-05"), 4}, ""}),
                   chain.tx(patient, cmd::UpdateProfile{patient.address(), {"Ana M. Lima", "1985-03-02", ""}})});
        chain.add({chain.tx(patient, cmd::RevokeAccess{doctor.address()})});
    }
};

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("medledger-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

inline bool contains_bytes(ByteView haystack, ByteView needle) {
    if (needle.empty()) return true;
    return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) != haystack.end();
}

}  // namespace medledger::test
