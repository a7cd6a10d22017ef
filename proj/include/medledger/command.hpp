#pragma once

// State-machine commands carried inside signed transactions.

#include <cstdint>
#include <string>
#include <variant>

#include "medledger/consensus.hpp"
#include "medledger/crypto.hpp"

namespace medledger {

enum class Role : std::uint8_t { Patient = 0, Doctor = 1, Admin = 2 };
enum class AccountStatus : std::uint8_t { Pending = 0, Active = 1, Inactive = 2 };
enum class AppointmentStatus : std::uint8_t { Requested = 0, Confirmed = 1, Rescheduled = 2, Completed = 3, Cancelled = 4 };
enum class AppointmentAction : std::uint8_t { Confirm = 0, Reschedule = 1, Complete = 2, Cancel = 3 };

std::string_view to_string(Role r);
std::string_view to_string(AccountStatus s);
std::string_view to_string(AppointmentStatus s);
std::string_view to_string(AppointmentAction a);
Role parse_role(std::string_view s);
AccountStatus parse_status(std::string_view s);

// Days since 1970-01-01 (proleptic Gregorian).
using Date = std::int32_t;
Date parse_date(std::string_view iso);  // YYYY-MM-DD; throws std::invalid_argument
std::string format_date(Date d);

struct Profile {
    std::string name;
    std::string birth_date;  // patients
    std::string specialty;   // doctors
    bool operator==(const Profile&) const = default;
};

struct Slot {
    Date date = 0;
    std::uint32_t index = 0;
    auto operator<=>(const Slot&) const = default;
};

struct SystemVars {
    Date start_date = 0;
    std::uint32_t slots_per_day = 16;
    std::uint32_t slot_length_minutes = 30;
    std::uint32_t day_start_minutes = 9 * 60;

    bool valid() const { return slots_per_day > 0 && slot_length_minutes > 0 && slots_per_day * slot_length_minutes <= 24 * 60 && day_start_minutes < 24 * 60; }
    bool operator==(const SystemVars&) const = default;
};

namespace cmd {

struct Genesis {
    std::string chain_id;
    Address admin;
    PublicKey admin_key;
    Profile admin_profile;
    ConsensusConfig consensus;
    SystemVars system;
    Digest spec_hash;
};

struct RegisterUser {
    Role role = Role::Patient;
    PublicKey public_key;
    Profile profile;
};

struct AddAdmin {
    PublicKey public_key;
    Profile profile;
};

struct SetUserStatus {
    Address target;
    AccountStatus status = AccountStatus::Active;
};

struct UpdateProfile {
    Address target;
    Profile profile;
};

struct AddMedication {
    std::string name;
    std::string form;
    std::string strength;
};

struct AddLabParameter {
    std::string name;
    std::string unit;
    double low = 0;
    double high = 0;
};

struct SetSystemVars {
    SystemVars vars;
};

struct RequestAppointment {
    Address doctor;
    Slot slot;
    std::string notes;
};

struct UpdateAppointment {
    std::uint64_t appointment_id = 0;
    AppointmentAction action = AppointmentAction::Confirm;
    Slot new_slot;  // Reschedule only
    std::string notes;
};

struct Prescribe {
    std::uint64_t appointment_id = 0;
    std::uint64_t medication_id = 0;
    std::string dosage;
};

struct InputLabResult {
    Address patient;
    std::uint64_t parameter_id = 0;
    double value = 0;
};

struct GrantAccess {
    Address doctor;
};

struct RevokeAccess {
    Address doctor;
};

struct AppendRecord {
    Address patient;
    SealedEnvelope envelope;
    std::string kind;
};

}  // namespace cmd

// The variant index is the wire tag.
using Command = std::variant<cmd::Genesis, cmd::RegisterUser, cmd::AddAdmin, cmd::SetUserStatus, cmd::UpdateProfile,
                             cmd::AddMedication, cmd::AddLabParameter, cmd::SetSystemVars, cmd::RequestAppointment,
                             cmd::UpdateAppointment, cmd::Prescribe, cmd::InputLabResult, cmd::GrantAccess,
                             cmd::RevokeAccess, cmd::AppendRecord>;

std::string_view command_name(const Command& c);

Bytes encode_command(const Command& c);
Command decode_command(ByteView bytes);  // throws DecodeError

void encode(Writer& w, const Profile& p);
Profile decode_profile(Reader& r);
void encode(Writer& w, const SystemVars& v);
SystemVars decode_system_vars(Reader& r);

}  // namespace medledger
