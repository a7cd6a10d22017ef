#include "medledger/ehr_state.hpp"

#include <algorithm>
#include <cmath>

namespace medledger {

std::string_view to_string(OpKind op) {
    static constexpr std::string_view kNames[] = {
        "Genesis",          "RegisterUser",   "AddAdmin",         "SetUserStatus",   "UpdateProfile",
        "AddMedication",    "AddLabParameter", "SetSystemVars",   "RequestAppointment", "UpdateAppointment",
        "Prescribe",        "InputLabResult", "GrantAccess",      "RevokeAccess",    "AppendRecord",
        "ReadProfile",      "ReadRecords",    "ReadAppointments", "ReadFreeSlots",   "ReadPrescriptions",
        "ReadLabResults",   "ReadDoctors",    "ReadUsers",        "ReadCatalogs",    "ExportData",
        "ReadAudit",        "Undecodable",
    };
    static_assert(std::size(kNames) == kOpKindCount);
    auto i = static_cast<std::size_t>(op);
    return i < kOpKindCount ? kNames[i] : "Unknown";
}

OpKind op_kind_of(const Command& c) { return static_cast<OpKind>(c.index()); }

std::string_view to_string(Reason r) {
    switch (r) {
        case Reason::NotSignedIn: return "NotSignedIn";
        case Reason::UnknownAccount: return "UnknownAccount";
        case Reason::Inactive: return "Inactive";
        case Reason::RoleMismatch: return "RoleMismatch";
        case Reason::Malformed: return "Malformed";
        case Reason::NotOwner: return "NotOwner";
        case Reason::DuplicateAddress: return "DuplicateAddress";
        case Reason::InvalidRole: return "InvalidRole";
        case Reason::UnknownTarget: return "UnknownTarget";
        case Reason::InvalidStatus: return "InvalidStatus";
        case Reason::DuplicateName: return "DuplicateName";
        case Reason::InvalidRange: return "InvalidRange";
        case Reason::InvalidSystemVars: return "InvalidSystemVars";
        case Reason::SlotTaken: return "SlotTaken";
        case Reason::DoctorUnknownOrInactive: return "DoctorUnknownOrInactive";
        case Reason::PatientUnknownOrInactive: return "PatientUnknownOrInactive";
        case Reason::SlotBeforeSystemStart: return "SlotBeforeSystemStart";
        case Reason::InvalidSlot: return "InvalidSlot";
        case Reason::UnknownAppointment: return "UnknownAppointment";
        case Reason::NotYourAppointment: return "NotYourAppointment";
        case Reason::IllegalTransition: return "IllegalTransition";
        case Reason::AppointmentNotConfirmed: return "AppointmentNotConfirmed";
        case Reason::UnknownMedication: return "UnknownMedication";
        case Reason::UnknownParameter: return "UnknownParameter";
        case Reason::NoActiveGrant: return "NoActiveGrant";
        case Reason::DuplicateActiveGrant: return "DuplicateActiveGrant";
        case Reason::PatientNotARecipient: return "PatientNotARecipient";
        case Reason::GenesisOnly: return "GenesisOnly";
    }
    return "Unknown";
}

const PermissionMatrix& PermissionMatrix::standard() {
    static const PermissionMatrix matrix = [] {
        PermissionMatrix m;
        auto grant = [&](Role role, std::initializer_list<OpKind> ops) {
            for (auto op : ops) m.table_[static_cast<std::size_t>(role)][static_cast<std::size_t>(op)] = true;
        };
        using enum OpKind;
        grant(Role::Patient, {UpdateProfile, RequestAppointment, GrantAccess, RevokeAccess, ReadProfile, ReadRecords,
                              ReadAppointments, ReadFreeSlots, ReadPrescriptions, ReadLabResults, ReadDoctors,
                              ReadCatalogs, ReadAudit});
        grant(Role::Doctor, {UpdateProfile, UpdateAppointment, Prescribe, InputLabResult, AppendRecord, ReadProfile,
                             ReadRecords, ReadAppointments, ReadFreeSlots, ReadPrescriptions, ReadLabResults,
                             ReadDoctors, ReadCatalogs, ReadAudit});
        // The administrator works only on the management side: no clinical
        // reads or writes.
        grant(Role::Admin, {AddAdmin, SetUserStatus, UpdateProfile, AddMedication, AddLabParameter, SetSystemVars,
                            ReadProfile, ReadDoctors, ReadUsers, ReadCatalogs, ExportData, ReadAudit});
        return m;
    }();
    return matrix;
}

std::uint64_t EhrState::next_nonce(const Address& sender) const {
    auto it = nonces_.find(sender);
    return it == nonces_.end() ? 0 : it->second;
}

const Account* EhrState::find_account(const Address& a) const {
    auto it = accounts_.find(a);
    return it == accounts_.end() ? nullptr : &it->second;
}

std::optional<PublicKey> EhrState::sender_key(const SignedTransaction& tx) const {
    if (const auto* acc = find_account(tx.sender)) return acc->public_key;
    try {
        auto c = decode_command(tx.command);
        if (const auto* reg = std::get_if<cmd::RegisterUser>(&c)) {
            if (address_of(reg->public_key) == tx.sender) return reg->public_key;
        }
    } catch (const DecodeError&) {
    }
    return std::nullopt;
}

Decision EhrState::check_access(const std::optional<Address>& session, OpKind op) const {
    if (!session) return Decision::reject(Reason::NotSignedIn);
    const auto* acc = find_account(*session);
    if (!acc) return Decision::reject(Reason::UnknownAccount);
    if (acc->status != AccountStatus::Active) return Decision::reject(Reason::Inactive);
    if (!PermissionMatrix::standard().allowed(acc->role, op)) return Decision::reject(Reason::RoleMismatch);
    return Decision::accept();
}

bool EhrState::active_with_role(const Address& a, Role r) const {
    const auto* acc = find_account(a);
    return acc && acc->role == r && acc->status == AccountStatus::Active;
}

bool EhrState::has_active_grant(const Address& patient, const Address& doctor) const {
    return active_grant_index_.contains({patient, doctor});
}

std::optional<Reason> EhrState::slot_conflict(const Address& doctor, const Slot& slot,
                                              std::uint64_t ignore_id) const {
    if (slot.date < system_.start_date) return Reason::SlotBeforeSystemStart;
    if (slot.index >= system_.slots_per_day) return Reason::InvalidSlot;
    auto it = booked_slots_.find({doctor, slot});
    if (it != booked_slots_.end() && it->second != ignore_id) return Reason::SlotTaken;
    return std::nullopt;
}

namespace {
template <class Map>
std::uint64_t next_id(const Map& m) {
    return m.empty() ? 1 : m.rbegin()->first + 1;
}

bool is_open(AppointmentStatus s) {
    return s == AppointmentStatus::Confirmed || s == AppointmentStatus::Rescheduled;
}
}  // namespace

const AuditEntry& EhrState::apply(const SignedTransaction& tx, std::uint64_t height, std::int64_t block_timestamp) {
    AuditEntry entry;
    entry.seq = audit_.size();
    entry.tx_hash = tx.tx_hash;
    entry.actor = tx.sender;
    entry.height = height;
    entry.timestamp = block_timestamp;

    std::optional<Command> command;
    try {
        command = decode_command(tx.command);
    } catch (const DecodeError&) {
    }

    if (!command) {
        entry.op = OpKind::Undecodable;
        entry.deny = Reason::Malformed;
    } else {
        entry.op = op_kind_of(*command);
        entry.deny = execute(*command, tx, height, entry.seq);
    }
    // The zero address only authors the unsigned genesis transaction.
    if (!tx.sender.is_zero()) nonces_[tx.sender] = tx.nonce + 1;
    audit_.push_back(entry);
    return audit_.back();
}

std::optional<Reason> EhrState::execute(const Command& c, const SignedTransaction& tx, std::uint64_t height,
                                        std::uint64_t seq) {
    const Address& sender = tx.sender;

    if (const auto* g = std::get_if<cmd::Genesis>(&c)) {
        if (initialized_ || height != 0 || !sender.is_zero()) return Reason::GenesisOnly;
        if (address_of(g->admin_key) != g->admin) return Reason::Malformed;
        initialized_ = true;
        chain_id_ = g->chain_id;
        genesis_admin_ = g->admin;
        consensus_ = g->consensus;
        system_ = g->system;
        spec_hash_ = g->spec_hash;
        accounts_[g->admin] = Account{g->admin, g->admin_key, Role::Admin, AccountStatus::Active, g->admin_profile, 0};
        return std::nullopt;
    }
    if (!initialized_) return Reason::GenesisOnly;

    if (const auto* reg = std::get_if<cmd::RegisterUser>(&c)) {
        if (address_of(reg->public_key) != sender) return Reason::Malformed;
        if (accounts_.contains(sender)) return Reason::DuplicateAddress;
        if (reg->role == Role::Admin) return Reason::InvalidRole;
        accounts_[sender] = Account{sender, reg->public_key, reg->role, AccountStatus::Pending, reg->profile, height};
        return std::nullopt;
    }

    if (auto access = check_access(sender, op_kind_of(c)); !access) return access.reason();

    return std::visit(
        [&](const auto& v) -> std::optional<Reason> {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, cmd::Genesis> || std::is_same_v<T, cmd::RegisterUser>) {
                return Reason::Malformed;  // handled above
            } else if constexpr (std::is_same_v<T, cmd::AddAdmin>) {
                auto addr = address_of(v.public_key);
                if (accounts_.contains(addr)) return Reason::DuplicateAddress;
                accounts_[addr] = Account{addr, v.public_key, Role::Admin, AccountStatus::Active, v.profile, height};
                return std::nullopt;
            } else if constexpr (std::is_same_v<T, cmd::SetUserStatus>) {
                auto it = accounts_.find(v.target);
                if (it == accounts_.end()) return Reason::UnknownTarget;
                if (v.status == AccountStatus::Pending) return Reason::InvalidStatus;
                it->second.status = v.status;
                return std::nullopt;
            } else if constexpr (std::is_same_v<T, cmd::UpdateProfile>) {
                if (v.target != sender) return Reason::NotOwner;
                accounts_[sender].profile = v.profile;
                return std::nullopt;
            } else if constexpr (std::is_same_v<T, cmd::AddMedication>) {
                if (v.name.empty()) return Reason::Malformed;
                for (const auto& [_, m] : medications_)
                    if (m.name == v.name) return Reason::DuplicateName;
                auto id = next_id(medications_);
                medications_[id] = Medication{id, v.name, v.form, v.strength, sender};
                return std::nullopt;
            } else if constexpr (std::is_same_v<T, cmd::AddLabParameter>) {
                if (v.name.empty()) return Reason::Malformed;
                if (!(v.low < v.high) || !std::isfinite(v.low) || !std::isfinite(v.high)) return Reason::InvalidRange;
                for (const auto& [_, p] : lab_parameters_)
                    if (p.name == v.name) return Reason::DuplicateName;
                auto id = next_id(lab_parameters_);
                lab_parameters_[id] = LabParameter{id, v.name, v.unit, v.low, v.high};
                return std::nullopt;
            } else if constexpr (std::is_same_v<T, cmd::SetSystemVars>) {
                if (!v.vars.valid()) return Reason::InvalidSystemVars;
                system_ = v.vars;
                return std::nullopt;
            } else if constexpr (std::is_same_v<T, cmd::RequestAppointment>) {
                if (!active_with_role(v.doctor, Role::Doctor)) return Reason::DoctorUnknownOrInactive;
                if (auto conflict = slot_conflict(v.doctor, v.slot, 0)) return conflict;
                auto id = next_id(appointments_);
                appointments_[id] = Appointment{id, sender, v.doctor, v.slot, AppointmentStatus::Requested, v.notes, {}};
                booked_slots_[{v.doctor, v.slot}] = id;
                return std::nullopt;
            } else if constexpr (std::is_same_v<T, cmd::UpdateAppointment>) {
                auto it = appointments_.find(v.appointment_id);
                if (it == appointments_.end()) return Reason::UnknownAppointment;
                Appointment& appt = it->second;
                if (appt.doctor != sender) return Reason::NotYourAppointment;
                switch (v.action) {
                    case AppointmentAction::Confirm:
                        if (appt.status != AppointmentStatus::Requested) return Reason::IllegalTransition;
                        appt.status = AppointmentStatus::Confirmed;
                        break;
                    case AppointmentAction::Reschedule: {
                        if (!is_open(appt.status)) return Reason::IllegalTransition;
                        if (auto conflict = slot_conflict(appt.doctor, v.new_slot, appt.id)) return conflict;
                        booked_slots_.erase({appt.doctor, appt.slot});
                        appt.slot = v.new_slot;
                        booked_slots_[{appt.doctor, appt.slot}] = appt.id;
                        appt.status = AppointmentStatus::Rescheduled;
                        break;
                    }
                    case AppointmentAction::Complete:
                        if (!is_open(appt.status)) return Reason::IllegalTransition;
                        appt.status = AppointmentStatus::Completed;
                        break;
                    case AppointmentAction::Cancel:
                        if (appt.status != AppointmentStatus::Requested && !is_open(appt.status))
                            return Reason::IllegalTransition;
                        booked_slots_.erase({appt.doctor, appt.slot});
                        appt.status = AppointmentStatus::Cancelled;
                        break;
                }
                if (!v.notes.empty()) appt.notes = v.notes;
                return std::nullopt;
            } else if constexpr (std::is_same_v<T, cmd::Prescribe>) {
                auto it = appointments_.find(v.appointment_id);
                if (it == appointments_.end()) return Reason::UnknownAppointment;
                Appointment& appt = it->second;
                if (appt.doctor != sender) return Reason::NotYourAppointment;
                if (!is_open(appt.status) && appt.status != AppointmentStatus::Completed)
                    return Reason::AppointmentNotConfirmed;
                if (!medications_.contains(v.medication_id)) return Reason::UnknownMedication;
                auto id = next_id(prescriptions_);
                prescriptions_[id] =
                    Prescription{id, appt.id, sender, appt.patient, v.medication_id, v.dosage, height};
                appt.prescription_ids.push_back(id);
                return std::nullopt;
            } else if constexpr (std::is_same_v<T, cmd::InputLabResult>) {
                if (!active_with_role(v.patient, Role::Patient)) return Reason::PatientUnknownOrInactive;
                if (!has_active_grant(v.patient, sender)) return Reason::NoActiveGrant;
                auto pit = lab_parameters_.find(v.parameter_id);
                if (pit == lab_parameters_.end()) return Reason::UnknownParameter;
                if (!std::isfinite(v.value)) return Reason::Malformed;
                bool flagged = v.value < pit->second.low || v.value > pit->second.high;
                auto id = next_id(lab_results_);
                lab_results_[id] = LabResult{id, v.patient, sender, v.parameter_id, v.value, flagged, height};
                return std::nullopt;
            } else if constexpr (std::is_same_v<T, cmd::GrantAccess>) {
                if (!active_with_role(v.doctor, Role::Doctor)) return Reason::DoctorUnknownOrInactive;
                if (has_active_grant(sender, v.doctor)) return Reason::DuplicateActiveGrant;
                grants_.push_back(AccessGrant{sender, v.doctor, height, seq, std::nullopt, std::nullopt});
                active_grant_index_[{sender, v.doctor}] = grants_.size() - 1;
                return std::nullopt;
            } else if constexpr (std::is_same_v<T, cmd::RevokeAccess>) {
                auto it = active_grant_index_.find({sender, v.doctor});
                if (it == active_grant_index_.end()) return Reason::NoActiveGrant;
                auto& g = grants_[it->second];
                g.revoked_at = height;
                g.revoked_seq = seq;
                active_grant_index_.erase(it);
                return std::nullopt;
            } else if constexpr (std::is_same_v<T, cmd::AppendRecord>) {
                if (!has_active_grant(v.patient, sender)) return Reason::NoActiveGrant;
                if (v.envelope.wrapped_keys.empty()) return Reason::Malformed;
                if (!v.envelope.has_recipient(v.patient)) return Reason::PatientNotARecipient;
                auto id = next_id(records_);
                records_[id] = SealedRecord{id, v.patient, sender, v.envelope, height, seq, v.kind};
                return std::nullopt;
            }
        },
        c);
}

Outcome<std::vector<std::uint32_t>> EhrState::list_free_slots(const Address& doctor, Date date) const {
    if (date < system_.start_date) return Outcome<std::vector<std::uint32_t>>::denied(Reason::SlotBeforeSystemStart);
    std::vector<std::uint32_t> out;
    for (std::uint32_t i = 0; i < system_.slots_per_day; ++i)
        if (!booked_slots_.contains({doctor, Slot{date, i}})) out.push_back(i);
    return out;
}

Outcome<std::vector<SealedRecord>> EhrState::read_records(const std::optional<Address>& caller,
                                                          const Address& patient) const {
    using Out = Outcome<std::vector<SealedRecord>>;
    if (auto access = check_access(caller, OpKind::ReadRecords); !access) return Out::denied(access.reason());
    const auto* acc = find_account(*caller);
    if (acc->role == Role::Patient && *caller != patient) return Out::denied(Reason::NotOwner);
    if (acc->role == Role::Doctor && !has_active_grant(patient, *caller)) return Out::denied(Reason::NoActiveGrant);
    std::vector<SealedRecord> out;
    for (const auto& [_, r] : records_)
        if (r.patient == patient) out.push_back(r);
    return out;
}

std::vector<Appointment> EhrState::appointments_of(const Address& party) const {
    std::vector<Appointment> out;
    for (const auto& [_, a] : appointments_)
        if (a.patient == party || a.doctor == party) out.push_back(a);
    return out;
}

std::vector<Prescription> EhrState::prescriptions_of(const Address& party) const {
    std::vector<Prescription> out;
    for (const auto& [_, p] : prescriptions_)
        if (p.patient == party || p.doctor == party) out.push_back(p);
    return out;
}

std::vector<LabResult> EhrState::lab_results_of(const Address& party) const {
    std::vector<LabResult> out;
    for (const auto& [_, r] : lab_results_)
        if (r.patient == party || r.doctor == party) out.push_back(r);
    return out;
}

std::vector<Account> EhrState::active_doctors() const {
    std::vector<Account> out;
    for (const auto& [_, a] : accounts_)
        if (a.role == Role::Doctor && a.status == AccountStatus::Active) out.push_back(a);
    return out;
}

std::vector<AuditEntry> EhrState::audit_visible_to(const Address& viewer) const {
    const auto* acc = find_account(viewer);
    if (acc && acc->role == Role::Admin) return audit_;
    std::vector<AuditEntry> out;
    for (const auto& e : audit_)
        if (e.actor == viewer) out.push_back(e);
    return out;
}

// ---------------------------------------------------------------------------
// Canonical serialization

namespace {

Address read_address(Reader& r) {
    Address a;
    a.bytes = r.fixed<20>();
    return a;
}

void write_opt_u64(Writer& w, const std::optional<std::uint64_t>& v) {
    w.boolean(v.has_value());
    if (v) w.u64(*v);
}
std::optional<std::uint64_t> read_opt_u64(Reader& r) {
    if (!r.boolean()) return std::nullopt;
    return r.u64();
}

template <class E>
E read_enum(Reader& r, std::uint8_t max) {
    auto v = r.u8();
    if (v > max) throw DecodeError("enum value out of range");
    return static_cast<E>(v);
}

void write_slot(Writer& w, const Slot& s) { w.i32(s.date).u32(s.index); }
Slot read_slot(Reader& r) {
    Slot s;
    s.date = r.i32();
    s.index = r.u32();
    return s;
}

}  // namespace

namespace {

struct Subtrees {
    Bytes system, accounts, catalogs, appointments, prescriptions, lab_results, records, grants;
};

}  // namespace

static Subtrees encode_subtrees(bool initialized, const std::string& chain_id, const Address& admin,
                                const ConsensusConfig& consensus, const SystemVars& sys, const Digest& spec_hash,
                                const std::map<Address, Account>& accounts,
                                const std::map<std::uint64_t, Medication>& meds,
                                const std::map<std::uint64_t, LabParameter>& params,
                                const std::map<std::uint64_t, Appointment>& appts,
                                const std::map<std::uint64_t, Prescription>& rxs,
                                const std::map<std::uint64_t, LabResult>& labs,
                                const std::map<std::uint64_t, SealedRecord>& records,
                                const std::vector<AccessGrant>& grants) {
    Subtrees out;
    {
        Writer w;
        w.boolean(initialized).str(chain_id).fixed(admin.bytes);
        encode(w, consensus);
        encode(w, sys);
        w.fixed(spec_hash);
        out.system = std::move(w).take();
    }
    {
        Writer w;
        w.u32(static_cast<std::uint32_t>(accounts.size()));
        for (const auto& [_, a] : accounts) {
            w.fixed(a.address.bytes).fixed(a.public_key).u8(static_cast<std::uint8_t>(a.role));
            w.u8(static_cast<std::uint8_t>(a.status));
            encode(w, a.profile);
            w.u64(a.registered_at);
        }
        out.accounts = std::move(w).take();
    }
    {
        Writer w;
        w.u32(static_cast<std::uint32_t>(meds.size()));
        for (const auto& [_, m] : meds) w.u64(m.id).str(m.name).str(m.form).str(m.strength).fixed(m.added_by.bytes);
        w.u32(static_cast<std::uint32_t>(params.size()));
        for (const auto& [_, p] : params) w.u64(p.id).str(p.name).str(p.unit).f64(p.low).f64(p.high);
        out.catalogs = std::move(w).take();
    }
    {
        Writer w;
        w.u32(static_cast<std::uint32_t>(appts.size()));
        for (const auto& [_, a] : appts) {
            w.u64(a.id).fixed(a.patient.bytes).fixed(a.doctor.bytes);
            write_slot(w, a.slot);
            w.u8(static_cast<std::uint8_t>(a.status)).str(a.notes);
            w.u32(static_cast<std::uint32_t>(a.prescription_ids.size()));
            for (auto id : a.prescription_ids) w.u64(id);
        }
        out.appointments = std::move(w).take();
    }
    {
        Writer w;
        w.u32(static_cast<std::uint32_t>(rxs.size()));
        for (const auto& [_, p] : rxs)
            w.u64(p.id).u64(p.appointment_id).fixed(p.doctor.bytes).fixed(p.patient.bytes).u64(p.medication_id)
                .str(p.dosage).u64(p.issued_at);
        out.prescriptions = std::move(w).take();
    }
    {
        Writer w;
        w.u32(static_cast<std::uint32_t>(labs.size()));
        for (const auto& [_, l] : labs)
            w.u64(l.id).fixed(l.patient.bytes).fixed(l.doctor.bytes).u64(l.parameter_id).f64(l.value)
                .boolean(l.flagged).u64(l.issued_at);
        out.lab_results = std::move(w).take();
    }
    {
        Writer w;
        w.u32(static_cast<std::uint32_t>(records.size()));
        for (const auto& [_, r] : records) {
            w.u64(r.id).fixed(r.patient.bytes).fixed(r.author.bytes);
            encode(w, r.envelope);
            w.u64(r.created_at).u64(r.created_seq).str(r.kind);
        }
        out.records = std::move(w).take();
    }
    {
        Writer w;
        w.u32(static_cast<std::uint32_t>(grants.size()));
        for (const auto& g : grants) {
            w.fixed(g.patient.bytes).fixed(g.doctor.bytes).u64(g.granted_at).u64(g.granted_seq);
            write_opt_u64(w, g.revoked_at);
            write_opt_u64(w, g.revoked_seq);
        }
        out.grants = std::move(w).take();
    }
    return out;
}

std::map<std::string, Digest> EhrState::subtree_roots() const {
    auto s = encode_subtrees(initialized_, chain_id_, genesis_admin_, consensus_, system_, spec_hash_, accounts_,
                             medications_, lab_parameters_, appointments_, prescriptions_, lab_results_, records_,
                             grants_);
    return {
        {"system", sha256(s.system)},
        {"accounts", sha256(s.accounts)},
        {"catalogs", sha256(s.catalogs)},
        {"appointments", sha256(s.appointments)},
        {"prescriptions", sha256(s.prescriptions)},
        {"lab_results", sha256(s.lab_results)},
        {"records", sha256(s.records)},
        {"grants", sha256(s.grants)},
    };
}

Digest EhrState::state_root() const {
    Writer w;
    w.str("medledger.state.v1");
    for (const auto& [name, digest] : subtree_roots()) w.str(name).fixed(digest);
    return sha256(w.data());
}

Bytes EhrState::serialize() const {
    auto s = encode_subtrees(initialized_, chain_id_, genesis_admin_, consensus_, system_, spec_hash_, accounts_,
                             medications_, lab_parameters_, appointments_, prescriptions_, lab_results_, records_,
                             grants_);
    Writer w;
    w.str("medledger.state.v1");
    for (const Bytes* part : {&s.system, &s.accounts, &s.catalogs, &s.appointments, &s.prescriptions, &s.lab_results,
                              &s.records, &s.grants})
        w.bytes(*part);
    w.u32(static_cast<std::uint32_t>(nonces_.size()));
    for (const auto& [a, n] : nonces_) w.fixed(a.bytes).u64(n);
    w.u32(static_cast<std::uint32_t>(audit_.size()));
    for (const auto& e : audit_) {
        w.u64(e.seq).fixed(e.tx_hash).fixed(e.actor.bytes).u8(static_cast<std::uint8_t>(e.op));
        w.boolean(e.deny.has_value());
        if (e.deny) w.u8(static_cast<std::uint8_t>(*e.deny));
        w.u64(e.height).i64(e.timestamp);
    }
    return std::move(w).take();
}

EhrState EhrState::deserialize(ByteView bytes) {
    EhrState st;
    Reader top(bytes);
    if (top.str() != "medledger.state.v1") throw DecodeError("not a medledger state image");

    {
        auto b = top.bytes();
        Reader r(b);
        st.initialized_ = r.boolean();
        st.chain_id_ = r.str();
        st.genesis_admin_ = read_address(r);
        st.consensus_ = decode_consensus_config(r);
        st.system_ = decode_system_vars(r);
        st.spec_hash_ = r.fixed<32>();
        r.expect_end();
    }
    {
        auto b = top.bytes();
        Reader r(b);
        auto n = r.u32();
        for (std::uint32_t i = 0; i < n; ++i) {
            Account a;
            a.address = read_address(r);
            a.public_key = r.fixed<32>();
            a.role = read_enum<Role>(r, 2);
            a.status = read_enum<AccountStatus>(r, 2);
            a.profile = decode_profile(r);
            a.registered_at = r.u64();
            st.accounts_[a.address] = std::move(a);
        }
        r.expect_end();
    }
    {
        auto b = top.bytes();
        Reader r(b);
        auto n = r.u32();
        for (std::uint32_t i = 0; i < n; ++i) {
            Medication m;
            m.id = r.u64();
            m.name = r.str();
            m.form = r.str();
            m.strength = r.str();
            m.added_by = read_address(r);
            st.medications_[m.id] = std::move(m);
        }
        n = r.u32();
        for (std::uint32_t i = 0; i < n; ++i) {
            LabParameter p;
            p.id = r.u64();
            p.name = r.str();
            p.unit = r.str();
            p.low = r.f64();
            p.high = r.f64();
            st.lab_parameters_[p.id] = std::move(p);
        }
        r.expect_end();
    }
    {
        auto b = top.bytes();
        Reader r(b);
        auto n = r.u32();
        for (std::uint32_t i = 0; i < n; ++i) {
            Appointment a;
            a.id = r.u64();
            a.patient = read_address(r);
            a.doctor = read_address(r);
            a.slot = read_slot(r);
            a.status = read_enum<AppointmentStatus>(r, 4);
            a.notes = r.str();
            auto k = r.u32();
            for (std::uint32_t j = 0; j < k; ++j) a.prescription_ids.push_back(r.u64());
            st.appointments_[a.id] = std::move(a);
        }
        r.expect_end();
    }
    {
        auto b = top.bytes();
        Reader r(b);
        auto n = r.u32();
        for (std::uint32_t i = 0; i < n; ++i) {
            Prescription p;
            p.id = r.u64();
            p.appointment_id = r.u64();
            p.doctor = read_address(r);
            p.patient = read_address(r);
            p.medication_id = r.u64();
            p.dosage = r.str();
            p.issued_at = r.u64();
            st.prescriptions_[p.id] = std::move(p);
        }
        r.expect_end();
    }
    {
        auto b = top.bytes();
        Reader r(b);
        auto n = r.u32();
        for (std::uint32_t i = 0; i < n; ++i) {
            LabResult l;
            l.id = r.u64();
            l.patient = read_address(r);
            l.doctor = read_address(r);
            l.parameter_id = r.u64();
            l.value = r.f64();
            l.flagged = r.boolean();
            l.issued_at = r.u64();
            st.lab_results_[l.id] = l;
        }
        r.expect_end();
    }
    {
        auto b = top.bytes();
        Reader r(b);
        auto n = r.u32();
        for (std::uint32_t i = 0; i < n; ++i) {
            SealedRecord rec;
            rec.id = r.u64();
            rec.patient = read_address(r);
            rec.author = read_address(r);
            rec.envelope = decode_envelope(r);
            rec.created_at = r.u64();
            rec.created_seq = r.u64();
            rec.kind = r.str();
            st.records_[rec.id] = std::move(rec);
        }
        r.expect_end();
    }
    {
        auto b = top.bytes();
        Reader r(b);
        auto n = r.u32();
        for (std::uint32_t i = 0; i < n; ++i) {
            AccessGrant g;
            g.patient = read_address(r);
            g.doctor = read_address(r);
            g.granted_at = r.u64();
            g.granted_seq = r.u64();
            g.revoked_at = read_opt_u64(r);
            g.revoked_seq = read_opt_u64(r);
            st.grants_.push_back(g);
        }
        r.expect_end();
    }
    auto n = top.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
        auto a = read_address(top);
        st.nonces_[a] = top.u64();
    }
    n = top.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
        AuditEntry e;
        e.seq = top.u64();
        e.tx_hash = top.fixed<32>();
        e.actor = read_address(top);
        e.op = read_enum<OpKind>(top, static_cast<std::uint8_t>(kOpKindCount - 1));
        if (top.boolean()) e.deny = read_enum<Reason>(top, static_cast<std::uint8_t>(Reason::GenesisOnly));
        e.height = top.u64();
        e.timestamp = top.i64();
        st.audit_.push_back(e);
    }
    top.expect_end();
    st.rebuild_indexes();
    return st;
}

void EhrState::rebuild_indexes() {
    active_grant_index_.clear();
    booked_slots_.clear();
    for (std::size_t i = 0; i < grants_.size(); ++i)
        if (grants_[i].active()) active_grant_index_[{grants_[i].patient, grants_[i].doctor}] = i;
    for (const auto& [id, a] : appointments_)
        if (a.status != AppointmentStatus::Cancelled) booked_slots_[{a.doctor, a.slot}] = id;
}

}  // namespace medledger
