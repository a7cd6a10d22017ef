#include "medledger/command.hpp"

#include <charconv>
#include <cstdio>

namespace medledger {

std::string_view to_string(Role r) {
    switch (r) {
        case Role::Patient: return "Patient";
        case Role::Doctor: return "Doctor";
        case Role::Admin: return "Admin";
    }
    return "Unknown";
}

std::string_view to_string(AccountStatus s) {
    switch (s) {
        case AccountStatus::Pending: return "Pending";
        case AccountStatus::Active: return "Active";
        case AccountStatus::Inactive: return "Inactive";
    }
    return "Unknown";
}

std::string_view to_string(AppointmentStatus s) {
    switch (s) {
        case AppointmentStatus::Requested: return "Requested";
        case AppointmentStatus::Confirmed: return "Confirmed";
        case AppointmentStatus::Rescheduled: return "Rescheduled";
        case AppointmentStatus::Completed: return "Completed";
        case AppointmentStatus::Cancelled: return "Cancelled";
    }
    return "Unknown";
}

std::string_view to_string(AppointmentAction a) {
    switch (a) {
        case AppointmentAction::Confirm: return "Confirm";
        case AppointmentAction::Reschedule: return "Reschedule";
        case AppointmentAction::Complete: return "Complete";
        case AppointmentAction::Cancel: return "Cancel";
    }
    return "Unknown";
}

Role parse_role(std::string_view s) {
    if (s == "Patient" || s == "patient") return Role::Patient;
    if (s == "Doctor" || s == "doctor") return Role::Doctor;
    if (s == "Admin" || s == "admin") return Role::Admin;
    throw std::invalid_argument("unknown role '" + std::string(s) + "'");
}

AccountStatus parse_status(std::string_view s) {
    if (s == "Pending" || s == "pending") return AccountStatus::Pending;
    if (s == "Active" || s == "active") return AccountStatus::Active;
    if (s == "Inactive" || s == "inactive") return AccountStatus::Inactive;
    throw std::invalid_argument("unknown status '" + std::string(s) + "'");
}

// Civil-date conversions after H. Hinnant's days_from_civil / civil_from_days.
namespace {
std::int32_t days_from_civil(std::int32_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int32_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int32_t>(doe) - 719468;
}

unsigned days_in_month(std::int32_t y, unsigned m) {
    static constexpr unsigned kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
    return m == 2 && leap ? 29 : kDays[m - 1];
}
}  // namespace

Date parse_date(std::string_view iso) {
    auto bad = [&] { return std::invalid_argument("date must be YYYY-MM-DD: '" + std::string(iso) + "'"); };
    if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') throw bad();
    int y = 0;
    unsigned m = 0, d = 0;
    auto parse = [&](std::size_t off, std::size_t len, auto& out) {
        auto [p, ec] = std::from_chars(iso.data() + off, iso.data() + off + len, out);
        if (ec != std::errc{} || p != iso.data() + off + len) throw bad();
    };
    parse(0, 4, y);
    parse(5, 2, m);
    parse(8, 2, d);
    if (m < 1 || m > 12 || d < 1 || d > days_in_month(y, m)) throw bad();
    return days_from_civil(y, m, d);
}

std::string format_date(Date z) {
    z += 719468;
    const std::int32_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    std::int32_t y = static_cast<std::int32_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp < 10 ? mp + 3 : mp - 9;
    if (m <= 2) ++y;
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", y, m, d);
    return buf;
}

void encode(Writer& w, const Profile& p) { w.str(p.name).str(p.birth_date).str(p.specialty); }

Profile decode_profile(Reader& r) {
    Profile p;
    p.name = r.str();
    p.birth_date = r.str();
    p.specialty = r.str();
    return p;
}

void encode(Writer& w, const SystemVars& v) {
    w.i32(v.start_date).u32(v.slots_per_day).u32(v.slot_length_minutes).u32(v.day_start_minutes);
}

SystemVars decode_system_vars(Reader& r) {
    SystemVars v;
    v.start_date = r.i32();
    v.slots_per_day = r.u32();
    v.slot_length_minutes = r.u32();
    v.day_start_minutes = r.u32();
    return v;
}

namespace {

Address read_address(Reader& r) {
    Address a;
    a.bytes = r.fixed<20>();
    return a;
}

void encode_slot(Writer& w, const Slot& s) { w.i32(s.date).u32(s.index); }
Slot decode_slot(Reader& r) {
    Slot s;
    s.date = r.i32();
    s.index = r.u32();
    return s;
}

template <class E>
E read_enum(Reader& r, std::uint8_t max) {
    auto v = r.u8();
    if (v > max) throw DecodeError("enum value out of range");
    return static_cast<E>(v);
}

struct EncodeVisitor {
    Writer& w;

    void operator()(const cmd::Genesis& c) const {
        w.str(c.chain_id).fixed(c.admin.bytes).fixed(c.admin_key);
        encode(w, c.admin_profile);
        encode(w, c.consensus);
        encode(w, c.system);
        w.fixed(c.spec_hash);
    }
    void operator()(const cmd::RegisterUser& c) const {
        w.u8(static_cast<std::uint8_t>(c.role)).fixed(c.public_key);
        encode(w, c.profile);
    }
    void operator()(const cmd::AddAdmin& c) const {
        w.fixed(c.public_key);
        encode(w, c.profile);
    }
    void operator()(const cmd::SetUserStatus& c) const {
        w.fixed(c.target.bytes).u8(static_cast<std::uint8_t>(c.status));
    }
    void operator()(const cmd::UpdateProfile& c) const {
        w.fixed(c.target.bytes);
        encode(w, c.profile);
    }
    void operator()(const cmd::AddMedication& c) const { w.str(c.name).str(c.form).str(c.strength); }
    void operator()(const cmd::AddLabParameter& c) const { w.str(c.name).str(c.unit).f64(c.low).f64(c.high); }
    void operator()(const cmd::SetSystemVars& c) const { encode(w, c.vars); }
    void operator()(const cmd::RequestAppointment& c) const {
        w.fixed(c.doctor.bytes);
        encode_slot(w, c.slot);
        w.str(c.notes);
    }
    void operator()(const cmd::UpdateAppointment& c) const {
        w.u64(c.appointment_id).u8(static_cast<std::uint8_t>(c.action));
        encode_slot(w, c.new_slot);
        w.str(c.notes);
    }
    void operator()(const cmd::Prescribe& c) const { w.u64(c.appointment_id).u64(c.medication_id).str(c.dosage); }
    void operator()(const cmd::InputLabResult& c) const { w.fixed(c.patient.bytes).u64(c.parameter_id).f64(c.value); }
    void operator()(const cmd::GrantAccess& c) const { w.fixed(c.doctor.bytes); }
    void operator()(const cmd::RevokeAccess& c) const { w.fixed(c.doctor.bytes); }
    void operator()(const cmd::AppendRecord& c) const {
        w.fixed(c.patient.bytes);
        encode(w, c.envelope);
        w.str(c.kind);
    }
};

}  // namespace

std::string_view command_name(const Command& c) {
    static constexpr std::string_view kNames[] = {
        "Genesis",         "RegisterUser",  "AddAdmin",           "SetUserStatus",     "UpdateProfile",
        "AddMedication",   "AddLabParameter", "SetSystemVars",    "RequestAppointment", "UpdateAppointment",
        "Prescribe",       "InputLabResult", "GrantAccess",       "RevokeAccess",      "AppendRecord",
    };
    static_assert(std::size(kNames) == std::variant_size_v<Command>);
    return kNames[c.index()];
}

Bytes encode_command(const Command& c) {
    Writer w;
    w.u8(static_cast<std::uint8_t>(c.index()));
    std::visit(EncodeVisitor{w}, c);
    return std::move(w).take();
}

Command decode_command(ByteView bytes) {
    Reader r(bytes);
    auto tag = r.u8();
    Command out;
    switch (tag) {
        case 0: {
            cmd::Genesis c;
            c.chain_id = r.str();
            c.admin = read_address(r);
            c.admin_key = r.fixed<32>();
            c.admin_profile = decode_profile(r);
            c.consensus = decode_consensus_config(r);
            c.system = decode_system_vars(r);
            c.spec_hash = r.fixed<32>();
            out = std::move(c);
            break;
        }
        case 1: {
            cmd::RegisterUser c;
            c.role = read_enum<Role>(r, 2);
            c.public_key = r.fixed<32>();
            c.profile = decode_profile(r);
            out = std::move(c);
            break;
        }
        case 2: {
            cmd::AddAdmin c;
            c.public_key = r.fixed<32>();
            c.profile = decode_profile(r);
            out = std::move(c);
            break;
        }
        case 3: {
            cmd::SetUserStatus c;
            c.target = read_address(r);
            c.status = read_enum<AccountStatus>(r, 2);
            out = c;
            break;
        }
        case 4: {
            cmd::UpdateProfile c;
            c.target = read_address(r);
            c.profile = decode_profile(r);
            out = std::move(c);
            break;
        }
        case 5: {
            cmd::AddMedication c;
            c.name = r.str();
            c.form = r.str();
            c.strength = r.str();
            out = std::move(c);
            break;
        }
        case 6: {
            cmd::AddLabParameter c;
            c.name = r.str();
            c.unit = r.str();
            c.low = r.f64();
            c.high = r.f64();
            out = std::move(c);
            break;
        }
        case 7: out = cmd::SetSystemVars{decode_system_vars(r)}; break;
        case 8: {
            cmd::RequestAppointment c;
            c.doctor = read_address(r);
            c.slot = decode_slot(r);
            c.notes = r.str();
            out = std::move(c);
            break;
        }
        case 9: {
            cmd::UpdateAppointment c;
            c.appointment_id = r.u64();
            c.action = read_enum<AppointmentAction>(r, 3);
            c.new_slot = decode_slot(r);
            c.notes = r.str();
            out = std::move(c);
            break;
        }
        case 10: {
            cmd::Prescribe c;
            c.appointment_id = r.u64();
            c.medication_id = r.u64();
            c.dosage = r.str();
            out = std::move(c);
            break;
        }
        case 11: {
            cmd::InputLabResult c;
            c.patient = read_address(r);
            c.parameter_id = r.u64();
            c.value = r.f64();
            out = c;
            break;
        }
        case 12: out = cmd::GrantAccess{read_address(r)}; break;
        case 13: out = cmd::RevokeAccess{read_address(r)}; break;
        case 14: {
            cmd::AppendRecord c;
            c.patient = read_address(r);
            c.envelope = decode_envelope(r);
            c.kind = r.str();
            out = std::move(c);
            break;
        }
        default: throw DecodeError("unknown command tag " + std::to_string(tag));
    }
    r.expect_end();
    return out;
}

}  // namespace medledger
