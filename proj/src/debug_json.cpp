#include "medledger/debug_json.hpp"

namespace medledger {

using nlohmann::json;

namespace {

json profile(const Profile& p) { return {{"name", p.name}, {"birth_date", p.birth_date}, {"specialty", p.specialty}}; }

json slot(const Slot& s) { return {{"date", format_date(s.date)}, {"index", s.index}}; }

json system_vars(const SystemVars& v) {
    return {{"start_date", format_date(v.start_date)},
            {"slots_per_day", v.slots_per_day},
            {"slot_length_minutes", v.slot_length_minutes},
            {"day_start_minutes", v.day_start_minutes}};
}

json proof(const ConsensusProof& p) {
    return std::visit(
        [](const auto& x) -> json {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, PowProof>)
                return {{"mode", "PoW"}, {"nonce", x.nonce}};
            else if constexpr (std::is_same_v<T, PosProof>)
                return {{"mode", "PoS"}, {"round", x.round}, {"seed", x.seed.hex()}, {"selected", x.selected.str()}};
            else
                return {{"mode", "DPoS"}, {"slot", x.slot}, {"producer", x.producer.str()}};
        },
        p);
}

}  // namespace

json consensus_json(const ConsensusConfig& c) {
    json stakes = json::object();
    for (const auto& [a, s] : c.stakes) stakes[a.str()] = s;
    json delegates = json::array();
    for (const auto& d : c.delegates) delegates.push_back(d.str());
    return {{"mode", to_string(c.mode)},
            {"pow_difficulty_bits", c.pow_difficulty_bits},
            {"stakes", stakes},
            {"delegates", delegates},
            {"target_block_interval_ms", c.target_block_interval_ms}};
}

json command_json(const Command& c) {
    json body = std::visit(
        [](const auto& x) -> json {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, cmd::Genesis>) {
                return {{"chain_id", x.chain_id},
                        {"admin", x.admin.str()},
                        {"admin_key", x.admin_key.hex()},
                        {"admin_profile", profile(x.admin_profile)},
                        {"consensus", consensus_json(x.consensus)},
                        {"system", system_vars(x.system)},
                        {"spec_hash", x.spec_hash.hex()}};
            } else if constexpr (std::is_same_v<T, cmd::RegisterUser>) {
                return {{"role", to_string(x.role)}, {"public_key", x.public_key.hex()}, {"profile", profile(x.profile)}};
            } else if constexpr (std::is_same_v<T, cmd::AddAdmin>) {
                return {{"public_key", x.public_key.hex()}, {"profile", profile(x.profile)}};
            } else if constexpr (std::is_same_v<T, cmd::SetUserStatus>) {
                return {{"target", x.target.str()}, {"status", to_string(x.status)}};
            } else if constexpr (std::is_same_v<T, cmd::UpdateProfile>) {
                return {{"target", x.target.str()}, {"profile", profile(x.profile)}};
            } else if constexpr (std::is_same_v<T, cmd::AddMedication>) {
                return {{"name", x.name}, {"form", x.form}, {"strength", x.strength}};
            } else if constexpr (std::is_same_v<T, cmd::AddLabParameter>) {
                return {{"name", x.name}, {"unit", x.unit}, {"low", x.low}, {"high", x.high}};
            } else if constexpr (std::is_same_v<T, cmd::SetSystemVars>) {
                return {{"vars", system_vars(x.vars)}};
            } else if constexpr (std::is_same_v<T, cmd::RequestAppointment>) {
                return {{"doctor", x.doctor.str()}, {"slot", slot(x.slot)}, {"notes", x.notes}};
            } else if constexpr (std::is_same_v<T, cmd::UpdateAppointment>) {
                json j = {{"appointment_id", x.appointment_id}, {"action", to_string(x.action)}, {"notes", x.notes}};
                if (x.action == AppointmentAction::Reschedule) j["new_slot"] = slot(x.new_slot);
                return j;
            } else if constexpr (std::is_same_v<T, cmd::Prescribe>) {
                return {{"appointment_id", x.appointment_id}, {"medication_id", x.medication_id}, {"dosage", x.dosage}};
            } else if constexpr (std::is_same_v<T, cmd::InputLabResult>) {
                return {{"patient", x.patient.str()}, {"parameter_id", x.parameter_id}, {"value", x.value}};
            } else if constexpr (std::is_same_v<T, cmd::GrantAccess> || std::is_same_v<T, cmd::RevokeAccess>) {
                return {{"doctor", x.doctor.str()}};
            } else {
                json recipients = json::array();
                for (const auto& [a, _] : x.envelope.wrapped_keys) recipients.push_back(a.str());
                return {{"patient", x.patient.str()},
                        {"kind", x.kind},
                        {"recipients", recipients},
                        {"ciphertext_bytes", x.envelope.ciphertext.size()},
                        {"plaintext_digest", x.envelope.plaintext_digest.hex()}};
            }
        },
        c);
    return {{"type", command_name(c)}, {"body", body}};
}

json transaction_json(const SignedTransaction& tx) {
    json j = {{"tx_hash", tx.tx_hash.hex()},
              {"sender", tx.sender.str()},
              {"nonce", tx.nonce},
              {"timestamp", tx.timestamp},
              {"signature", tx.signature.hex()}};
    try {
        j["command"] = command_json(decode_command(tx.command));
    } catch (const DecodeError&) {
        j["command"] = {{"type", "undecodable"}, {"raw", to_hex(tx.command)}};
    }
    return j;
}

json block_json(const Block& b) {
    json txs = json::array();
    for (const auto& tx : b.transactions) txs.push_back(transaction_json(tx));
    return {{"height", b.header.height},
            {"block_hash", b.block_hash.hex()},
            {"prev_hash", b.header.prev_hash.hex()},
            {"timestamp", b.header.timestamp},
            {"producer", b.header.producer.str()},
            {"tx_root", b.header.tx_root.hex()},
            {"proof", proof(b.header.proof)},
            {"producer_key", b.producer_key.hex()},
            {"producer_signature", b.producer_signature.hex()},
            {"transactions", txs}};
}

}  // namespace medledger
