#pragma once

// The deterministic contract layer: accounts, role-based access control,
// clinical workflow objects, sealed records and consent grants.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "medledger/command.hpp"
#include "medledger/transaction.hpp"

namespace medledger {

// Mutation kinds share numbering with the Command variant.
enum class OpKind : std::uint8_t {
    Genesis,
    RegisterUser,
    AddAdmin,
    SetUserStatus,
    UpdateProfile,
    AddMedication,
    AddLabParameter,
    SetSystemVars,
    RequestAppointment,
    UpdateAppointment,
    Prescribe,
    InputLabResult,
    GrantAccess,
    RevokeAccess,
    AppendRecord,
    ReadProfile,
    ReadRecords,
    ReadAppointments,
    ReadFreeSlots,
    ReadPrescriptions,
    ReadLabResults,
    ReadDoctors,
    ReadUsers,
    ReadCatalogs,
    ExportData,
    ReadAudit,
    Undecodable,  // audit-only: command bytes did not decode
};
inline constexpr std::size_t kOpKindCount = 27;

std::string_view to_string(OpKind op);
OpKind op_kind_of(const Command& c);

enum class Reason : std::uint8_t {
    NotSignedIn,
    UnknownAccount,
    Inactive,
    RoleMismatch,
    Malformed,
    NotOwner,
    DuplicateAddress,
    InvalidRole,
    UnknownTarget,
    InvalidStatus,
    DuplicateName,
    InvalidRange,
    InvalidSystemVars,
    SlotTaken,
    DoctorUnknownOrInactive,
    PatientUnknownOrInactive,
    SlotBeforeSystemStart,
    InvalidSlot,
    UnknownAppointment,
    NotYourAppointment,
    IllegalTransition,
    AppointmentNotConfirmed,
    UnknownMedication,
    UnknownParameter,
    NoActiveGrant,
    DuplicateActiveGrant,
    PatientNotARecipient,
    GenesisOnly,
};
std::string_view to_string(Reason r);

using Decision = Verdict<Reason>;

// Either a value or the Reason it was denied.
template <class T>
class Outcome {
public:
    Outcome(T value) : v_(std::move(value)) {}
    static Outcome denied(Reason r) { return Outcome(r, 0); }

    bool ok() const { return v_.index() == 0; }
    const T& value() const { return std::get<0>(v_); }
    T& value() { return std::get<0>(v_); }
    Reason reason() const { return std::get<1>(v_); }

private:
    Outcome(Reason r, int) : v_(std::in_place_index<1>, r) {}
    std::variant<T, Reason> v_;
};

// (role, operation) -> allowed. Fixed for the lifetime of a chain.
class PermissionMatrix {
public:
    static const PermissionMatrix& standard();
    bool allowed(Role role, OpKind op) const {
        return table_[static_cast<std::size_t>(role)][static_cast<std::size_t>(op)];
    }

private:
    std::array<std::array<bool, kOpKindCount>, 3> table_{};
};

struct Account {
    Address address;
    PublicKey public_key;
    Role role = Role::Patient;
    AccountStatus status = AccountStatus::Pending;
    Profile profile;
    std::uint64_t registered_at = 0;
    bool operator==(const Account&) const = default;
};

struct Appointment {
    std::uint64_t id = 0;
    Address patient;
    Address doctor;
    Slot slot;
    AppointmentStatus status = AppointmentStatus::Requested;
    std::string notes;
    std::vector<std::uint64_t> prescription_ids;
    bool operator==(const Appointment&) const = default;
};

struct Medication {
    std::uint64_t id = 0;
    std::string name;
    std::string form;
    std::string strength;
    Address added_by;
    bool operator==(const Medication&) const = default;
};

struct Prescription {
    std::uint64_t id = 0;
    std::uint64_t appointment_id = 0;
    Address doctor;
    Address patient;
    std::uint64_t medication_id = 0;
    std::string dosage;
    std::uint64_t issued_at = 0;
    bool operator==(const Prescription&) const = default;
};

struct LabParameter {
    std::uint64_t id = 0;
    std::string name;
    std::string unit;
    double low = 0;
    double high = 0;
    bool operator==(const LabParameter&) const = default;
};

struct LabResult {
    std::uint64_t id = 0;
    Address patient;
    Address doctor;
    std::uint64_t parameter_id = 0;
    double value = 0;
    bool flagged = false;
    std::uint64_t issued_at = 0;
    bool operator==(const LabResult&) const = default;
};

struct SealedRecord {
    std::uint64_t id = 0;
    Address patient;
    Address author;
    SealedEnvelope envelope;
    std::uint64_t created_at = 0;   // block height
    std::uint64_t created_seq = 0;  // audit sequence of the creating tx
    std::string kind;
    bool operator==(const SealedRecord&) const = default;
};

struct AccessGrant {
    Address patient;
    Address doctor;
    std::uint64_t granted_at = 0;
    std::uint64_t granted_seq = 0;
    std::optional<std::uint64_t> revoked_at;
    std::optional<std::uint64_t> revoked_seq;

    bool active() const { return !revoked_seq.has_value(); }
    // Whether the grant was in force when the tx with audit sequence `seq` ran.
    bool active_at_seq(std::uint64_t seq) const { return granted_seq < seq && (!revoked_seq || *revoked_seq > seq); }
    bool operator==(const AccessGrant&) const = default;
};

struct AuditEntry {
    std::uint64_t seq = 0;
    Digest tx_hash;
    Address actor;
    OpKind op = OpKind::Genesis;
    std::optional<Reason> deny;  // empty = Allow
    std::uint64_t height = 0;
    std::int64_t timestamp = 0;

    bool allowed() const { return !deny.has_value(); }
    bool operator==(const AuditEntry&) const = default;
};

class EhrState {
public:
    // Ledger bookkeeping.
    bool initialized() const { return initialized_; }
    const std::string& chain_id() const { return chain_id_; }
    const ConsensusConfig& consensus() const { return consensus_; }
    const SystemVars& system_vars() const { return system_; }
    const Digest& genesis_spec_hash() const { return spec_hash_; }
    std::uint64_t next_nonce(const Address& sender) const;

    const Account* find_account(const Address& a) const;
    // The key that authenticates `tx.sender`: the registered key, or for a
    // self-registration the key carried in the command.
    std::optional<PublicKey> sender_key(const SignedTransaction& tx) const;

    Decision check_access(const std::optional<Address>& session, OpKind op) const;

    // Executes one ledger-validated transaction. Denials leave the contract
    // state untouched apart from the audit log and the sender's nonce.
    const AuditEntry& apply(const SignedTransaction& tx, std::uint64_t height, std::int64_t block_timestamp);

    // Queries.
    const std::map<Address, Account>& accounts() const { return accounts_; }
    const std::map<std::uint64_t, Medication>& medications() const { return medications_; }
    const std::map<std::uint64_t, LabParameter>& lab_parameters() const { return lab_parameters_; }
    const std::map<std::uint64_t, Appointment>& appointments() const { return appointments_; }
    const std::map<std::uint64_t, Prescription>& prescriptions() const { return prescriptions_; }
    const std::map<std::uint64_t, LabResult>& lab_results() const { return lab_results_; }
    const std::map<std::uint64_t, SealedRecord>& records() const { return records_; }
    const std::vector<AccessGrant>& grants() const { return grants_; }
    const std::vector<AuditEntry>& audit_log() const { return audit_; }

    bool has_active_grant(const Address& patient, const Address& doctor) const;
    Outcome<std::vector<std::uint32_t>> list_free_slots(const Address& doctor, Date date) const;
    Outcome<std::vector<SealedRecord>> read_records(const std::optional<Address>& caller,
                                                    const Address& patient) const;
    std::vector<Appointment> appointments_of(const Address& party) const;
    std::vector<Prescription> prescriptions_of(const Address& party) const;
    std::vector<LabResult> lab_results_of(const Address& party) const;
    std::vector<Account> active_doctors() const;
    // Admins see every entry; other roles see the entries they authored.
    std::vector<AuditEntry> audit_visible_to(const Address& viewer) const;

    // Digest over accounts, catalogs, system settings and clinical data.
    // The audit log and nonce ledger are excluded.
    Digest state_root() const;
    std::map<std::string, Digest> subtree_roots() const;

    Bytes serialize() const;
    static EhrState deserialize(ByteView bytes);

    bool operator==(const EhrState&) const = default;

private:
    std::optional<Reason> execute(const Command& c, const SignedTransaction& tx, std::uint64_t height,
                                  std::uint64_t seq);
    std::optional<Reason> slot_conflict(const Address& doctor, const Slot& slot, std::uint64_t ignore_id) const;
    bool active_with_role(const Address& a, Role r) const;
    void rebuild_indexes();

    bool initialized_ = false;
    std::string chain_id_;
    Address genesis_admin_;
    ConsensusConfig consensus_;
    SystemVars system_;
    Digest spec_hash_;

    std::map<Address, Account> accounts_;
    std::map<std::uint64_t, Medication> medications_;
    std::map<std::uint64_t, LabParameter> lab_parameters_;
    std::map<std::uint64_t, Appointment> appointments_;
    std::map<std::uint64_t, Prescription> prescriptions_;
    std::map<std::uint64_t, LabResult> lab_results_;
    std::map<std::uint64_t, SealedRecord> records_;
    std::vector<AccessGrant> grants_;
    std::vector<AuditEntry> audit_;
    std::map<Address, std::uint64_t> nonces_;

    // Derived, rebuilt on deserialize.
    std::map<std::pair<Address, Address>, std::size_t> active_grant_index_;
    std::map<std::pair<Address, Slot>, std::uint64_t> booked_slots_;
};

}  // namespace medledger
