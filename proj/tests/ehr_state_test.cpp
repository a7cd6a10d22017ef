#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "generators.hpp"
#include "medledger/export.hpp"

using namespace medledger;
using test::Population;

namespace {

struct TableRow {
    bool patient = false, doctor = false, admin = false;
};

std::map<std::string, TableRow> load_permission_table() {
    std::ifstream in(std::string(MEDLEDGER_SOURCE_DIR) + "/tests/golden/permissions.txt");
    std::map<std::string, TableRow> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string op, p, d, a;
        ss >> op >> p >> d >> a;
        out[op] = {p == "allow", d == "allow", a == "allow"};
    }
    return out;
}

std::vector<OpKind> all_ops() {
    std::vector<OpKind> v;
    for (std::size_t i = 0; i < kOpKindCount; ++i) v.push_back(static_cast<OpKind>(i));
    return v;
}

Slot slot(const char* date, std::uint32_t i) { return {parse_date(date), i}; }

}  // namespace

// ---- RBAC ----

TEST(Rbac, TableCoversEveryOperation) {
    auto table = load_permission_table();
    EXPECT_EQ(table.size(), kOpKindCount);
    for (auto op : all_ops()) EXPECT_TRUE(table.contains(std::string(to_string(op)))) << to_string(op);
}

TEST(Rbac, CheckAccessMatchesTableForEveryCallerState) {
    auto table = load_permission_table();
    Population pop;
    auto patient = pop.add("patient", Role::Patient);
    auto doctor = pop.add("doctor", Role::Doctor);
    auto pending_patient = pop.add("pending-patient", Role::Patient, false);
    auto pending_doctor = pop.add("pending-doctor", Role::Doctor, false);
    auto inactive = pop.add("inactive", Role::Doctor);
    pop.chain.run(pop.admin, cmd::SetUserStatus{inactive.address(), AccountStatus::Inactive});
    const auto& s = pop.chain.state();

    for (auto op : all_ops()) {
        const auto& row = table.at(std::string(to_string(op)));
        SCOPED_TRACE(std::string(to_string(op)));
        EXPECT_EQ(s.check_access(std::nullopt, op).reason(), Reason::NotSignedIn);
        EXPECT_EQ(s.check_access(test::key("nobody").address(), op).reason(), Reason::UnknownAccount);
        EXPECT_EQ(s.check_access(pending_patient.address(), op).reason(), Reason::Inactive);
        EXPECT_EQ(s.check_access(pending_doctor.address(), op).reason(), Reason::Inactive);
        EXPECT_EQ(s.check_access(inactive.address(), op).reason(), Reason::Inactive);
        auto expect = [&](const KeyPair& k, bool allowed) {
            auto d = s.check_access(k.address(), op);
            if (allowed)
                EXPECT_TRUE(d);
            else
                EXPECT_EQ(d.reason(), Reason::RoleMismatch);
        };
        expect(patient, row.patient);
        expect(doctor, row.doctor);
        expect(pop.admin, row.admin);
    }
}

TEST(Rbac, NamedExamples) {
    Population pop;
    auto patient = pop.add("patient", Role::Patient);
    auto doctor = pop.add("doctor", Role::Doctor);
    const auto& s = pop.chain.state();
    EXPECT_TRUE(s.check_access(doctor.address(), OpKind::AppendRecord));
    EXPECT_EQ(s.check_access(patient.address(), OpKind::AddMedication).reason(), Reason::RoleMismatch);
    EXPECT_EQ(s.check_access(pop.admin.address(), OpKind::ReadRecords).reason(), Reason::RoleMismatch);
}

// ---- accounts ----

TEST(Accounts, RegistrationLifecycle) {
    Population pop;
    auto p = test::key("p");
    auto& chain = pop.chain;
    EXPECT_TRUE(chain.run(p, cmd::RegisterUser{Role::Patient, p.public_key(), {"P", "", ""}}).allowed());
    EXPECT_EQ(chain.state().find_account(p.address())->status, AccountStatus::Pending);
    EXPECT_EQ(chain.run(p, cmd::RegisterUser{Role::Patient, p.public_key(), {"P", "", ""}}).deny,
              Reason::DuplicateAddress);

    auto a = test::key("would-be-admin");
    EXPECT_EQ(chain.run(a, cmd::RegisterUser{Role::Admin, a.public_key(), {}}).deny, Reason::InvalidRole);

    auto d = pop.add("doc", Role::Doctor, false);
    EXPECT_EQ(chain.run(d, cmd::AppendRecord{p.address(), seal(as_view("x"), {p.public_key()}), "k"}).deny,
              Reason::Inactive);

    EXPECT_TRUE(chain.run(pop.admin, cmd::SetUserStatus{p.address(), AccountStatus::Active}).allowed());
    EXPECT_EQ(chain.run(pop.admin, cmd::SetUserStatus{test::key("ghost").address(), AccountStatus::Active}).deny,
              Reason::UnknownTarget);
    EXPECT_EQ(chain.run(pop.admin, cmd::SetUserStatus{p.address(), AccountStatus::Pending}).deny,
              Reason::InvalidStatus);
}

TEST(Accounts, DoctorCannotActivate) {
    Population pop;
    auto d = pop.add("doc", Role::Doctor);
    auto p = pop.add("pat", Role::Patient, false);
    EXPECT_EQ(pop.chain.run(d, cmd::SetUserStatus{p.address(), AccountStatus::Active}).deny, Reason::RoleMismatch);
}

TEST(Accounts, DeactivatedDoctorLosesRights) {
    Population pop;
    auto p = pop.add("pat", Role::Patient);
    auto d = pop.add("doc", Role::Doctor);
    auto& c = pop.chain;
    c.run(pop.admin, cmd::AddMedication{"Ibuprofen", "tablet", "200mg"});
    c.run(p, cmd::RequestAppointment{d.address(), slot("2026-01-02", 0), ""});
    c.run(d, cmd::UpdateAppointment{1, AppointmentAction::Confirm, {}, ""});
    c.run(pop.admin, cmd::SetUserStatus{d.address(), AccountStatus::Inactive});
    EXPECT_EQ(c.run(d, cmd::Prescribe{1, 1, "daily"}).deny, Reason::Inactive);
}

TEST(Accounts, ProfileUpdatesOnlyTouchAccounts) {
    Population pop;
    auto p = pop.add("pat", Role::Patient);
    auto other = pop.add("other", Role::Patient);
    auto before = pop.chain.state().subtree_roots();
    EXPECT_TRUE(pop.chain.run(p, cmd::UpdateProfile{p.address(), {"New Name", "1990-01-01", ""}}).allowed());
    EXPECT_EQ(pop.chain.state().find_account(p.address())->profile.name, "New Name");
    auto after = pop.chain.state().subtree_roots();
    for (const auto& [name, d] : before)
        if (name == "accounts")
            EXPECT_NE(after[name], d);
        else
            EXPECT_EQ(after[name], d) << name;
    EXPECT_EQ(pop.chain.run(p, cmd::UpdateProfile{other.address(), {"Hijack", "", ""}}).deny, Reason::NotOwner);
}

TEST(Accounts, AdminAddsAdmin) {
    Population pop;
    auto second = test::key("admin2");
    EXPECT_TRUE(pop.chain.run(pop.admin, cmd::AddAdmin{second.public_key(), {"Second", "", ""}}).allowed());
    EXPECT_TRUE(pop.chain.state().check_access(second.address(), OpKind::ExportData));
    auto d = pop.add("doc", Role::Doctor);
    EXPECT_EQ(pop.chain.run(d, cmd::AddAdmin{test::key("x").public_key(), {}}).deny, Reason::RoleMismatch);
}

// ---- catalogs ----

TEST(Catalogs, AdminManagesCatalogs) {
    Population pop;
    auto p = pop.add("pat", Role::Patient);
    auto& c = pop.chain;
    EXPECT_TRUE(c.run(pop.admin, cmd::AddMedication{"Amoxicillin 500mg", "capsule", "500mg"}).allowed());
    EXPECT_EQ(c.state().medications().at(1).name, "Amoxicillin 500mg");
    EXPECT_EQ(c.state().medications().at(1).added_by, pop.admin.address());
    EXPECT_EQ(c.run(pop.admin, cmd::AddMedication{"Amoxicillin 500mg", "x", "y"}).deny, Reason::DuplicateName);
    EXPECT_EQ(c.run(pop.admin, cmd::AddLabParameter{"HbA1c", "%", 5, 5}).deny, Reason::InvalidRange);
    EXPECT_TRUE(c.run(pop.admin, cmd::AddLabParameter{"HbA1c", "%", 4, 5.6}).allowed());
    EXPECT_EQ(c.run(p, cmd::SetSystemVars{SystemVars{}}).deny, Reason::RoleMismatch);
    EXPECT_EQ(c.run(pop.admin, cmd::SetSystemVars{SystemVars{0, 50, 30, 0}}).deny, Reason::InvalidSystemVars);
}

// ---- appointments ----

TEST(Appointments, BookingRules) {
    Population pop;
    auto p1 = pop.add("p1", Role::Patient);
    auto p2 = pop.add("p2", Role::Patient);
    auto d = pop.add("doc", Role::Doctor);
    auto d_off = pop.add("doc-off", Role::Doctor, false);
    auto& c = pop.chain;
    EXPECT_TRUE(c.run(p1, cmd::RequestAppointment{d.address(), slot("2026-01-03", 2), ""}).allowed());
    EXPECT_EQ(c.state().appointments().at(1).status, AppointmentStatus::Requested);
    EXPECT_EQ(c.run(p2, cmd::RequestAppointment{d.address(), slot("2026-01-03", 2), ""}).deny, Reason::SlotTaken);
    EXPECT_EQ(c.run(p2, cmd::RequestAppointment{d.address(), slot("2025-12-31", 2), ""}).deny,
              Reason::SlotBeforeSystemStart);
    EXPECT_EQ(c.run(p2, cmd::RequestAppointment{d.address(), slot("2026-01-03", 16), ""}).deny, Reason::InvalidSlot);
    EXPECT_EQ(c.run(p2, cmd::RequestAppointment{d_off.address(), slot("2026-01-03", 1), ""}).deny,
              Reason::DoctorUnknownOrInactive);
    EXPECT_EQ(c.run(d, cmd::RequestAppointment{d.address(), slot("2026-01-03", 1), ""}).deny, Reason::RoleMismatch);
}

TEST(Appointments, FreeSlots) {
    Population pop;
    auto p = pop.add("p", Role::Patient);
    auto d = pop.add("doc", Role::Doctor);
    auto& c = pop.chain;
    auto all = c.state().list_free_slots(d.address(), parse_date("2026-01-03"));
    ASSERT_TRUE(all.ok());
    EXPECT_EQ(all.value().size(), 16u);
    c.run(p, cmd::RequestAppointment{d.address(), slot("2026-01-03", 3), ""});
    c.run(d, cmd::UpdateAppointment{1, AppointmentAction::Confirm, {}, ""});
    auto free = c.state().list_free_slots(d.address(), parse_date("2026-01-03")).value();
    EXPECT_EQ(std::count(free.begin(), free.end(), 3u), 0);
    EXPECT_EQ(free.size(), 15u);
    EXPECT_FALSE(c.state().list_free_slots(d.address(), parse_date("2025-06-01")).ok());
}

// Brute-force set difference over the full appointment table.
TEST(Appointments, FreeSlotsMatchBruteForce) {
    for (std::uint64_t seed : {1, 2, 3}) {
        auto run = test::random_run(seed, 150);
        const auto& s = run.chain.state();
        for (const auto& d : run.doctors) {
            for (int day = 0; day < 3; ++day) {
                Date date = s.system_vars().start_date + day;
                std::set<std::uint32_t> expected;
                for (std::uint32_t i = 0; i < s.system_vars().slots_per_day; ++i) expected.insert(i);
                for (const auto& [_, a] : s.appointments())
                    if (a.doctor == d.address() && a.slot.date == date && a.status != AppointmentStatus::Cancelled)
                        expected.erase(a.slot.index);
                auto got = s.list_free_slots(d.address(), date).value();
                EXPECT_EQ(std::set<std::uint32_t>(got.begin(), got.end()), expected);
            }
        }
    }
}

TEST(Appointments, TransitionTable) {
    using A = AppointmentAction;
    using S = AppointmentStatus;
    // Expected outcome per (start status, action); nullopt = IllegalTransition.
    const std::map<std::pair<S, A>, std::optional<S>> table = {
        {{S::Requested, A::Confirm}, S::Confirmed},     {{S::Requested, A::Reschedule}, std::nullopt},
        {{S::Requested, A::Complete}, std::nullopt},    {{S::Requested, A::Cancel}, S::Cancelled},
        {{S::Confirmed, A::Confirm}, std::nullopt},     {{S::Confirmed, A::Reschedule}, S::Rescheduled},
        {{S::Confirmed, A::Complete}, S::Completed},    {{S::Confirmed, A::Cancel}, S::Cancelled},
        {{S::Rescheduled, A::Confirm}, std::nullopt},   {{S::Rescheduled, A::Reschedule}, S::Rescheduled},
        {{S::Rescheduled, A::Complete}, S::Completed},  {{S::Rescheduled, A::Cancel}, S::Cancelled},
        {{S::Completed, A::Confirm}, std::nullopt},     {{S::Completed, A::Reschedule}, std::nullopt},
        {{S::Completed, A::Complete}, std::nullopt},    {{S::Completed, A::Cancel}, std::nullopt},
        {{S::Cancelled, A::Confirm}, std::nullopt},     {{S::Cancelled, A::Reschedule}, std::nullopt},
        {{S::Cancelled, A::Complete}, std::nullopt},    {{S::Cancelled, A::Cancel}, std::nullopt},
    };
    // Actions that reach each start status from Requested.
    const std::map<S, std::vector<A>> path = {{S::Requested, {}},
                                              {S::Confirmed, {A::Confirm}},
                                              {S::Rescheduled, {A::Confirm, A::Reschedule}},
                                              {S::Completed, {A::Confirm, A::Complete}},
                                              {S::Cancelled, {A::Cancel}}};
    for (const auto& [key, expected] : table) {
        Population pop;
        auto p = pop.add("p", Role::Patient);
        auto d = pop.add("d", Role::Doctor);
        auto& c = pop.chain;
        c.run(p, cmd::RequestAppointment{d.address(), slot("2026-01-04", 0), ""});
        std::uint32_t next = 1;
        for (auto a : path.at(key.first)) ASSERT_TRUE(c.run(d, cmd::UpdateAppointment{1, a, slot("2026-01-04", next++), ""}).allowed());
        ASSERT_EQ(c.state().appointments().at(1).status, key.first);
        auto e = c.run(d, cmd::UpdateAppointment{1, key.second, slot("2026-01-04", 9), ""});
        if (expected) {
            EXPECT_TRUE(e.allowed());
            EXPECT_EQ(c.state().appointments().at(1).status, *expected);
        } else {
            EXPECT_EQ(e.deny, Reason::IllegalTransition);
        }
    }
}

TEST(Appointments, RescheduleFreesOldSlotAndChecksNewOne) {
    Population pop;
    auto p1 = pop.add("p1", Role::Patient);
    auto p2 = pop.add("p2", Role::Patient);
    auto d = pop.add("d", Role::Doctor);
    auto d2 = pop.add("d2", Role::Doctor);
    auto& c = pop.chain;
    c.run(p1, cmd::RequestAppointment{d.address(), slot("2026-01-04", 0), ""});
    c.run(p2, cmd::RequestAppointment{d.address(), slot("2026-01-04", 1), ""});
    c.run(d, cmd::UpdateAppointment{1, AppointmentAction::Confirm, {}, ""});
    EXPECT_EQ(c.run(d, cmd::UpdateAppointment{1, AppointmentAction::Reschedule, slot("2026-01-04", 1), ""}).deny,
              Reason::SlotTaken);
    EXPECT_TRUE(c.run(d, cmd::UpdateAppointment{1, AppointmentAction::Reschedule, slot("2026-01-04", 5), ""}).allowed());
    EXPECT_TRUE(c.run(p2, cmd::RequestAppointment{d.address(), slot("2026-01-04", 0), ""}).allowed());
    EXPECT_EQ(c.run(d2, cmd::UpdateAppointment{1, AppointmentAction::Complete, {}, ""}).deny,
              Reason::NotYourAppointment);
    EXPECT_EQ(c.run(d, cmd::UpdateAppointment{99, AppointmentAction::Complete, {}, ""}).deny,
              Reason::UnknownAppointment);
}

// ---- prescriptions and labs ----

TEST(Clinical, Prescriptions) {
    Population pop;
    auto p = pop.add("p", Role::Patient);
    auto d = pop.add("d", Role::Doctor);
    auto d2 = pop.add("d2", Role::Doctor);
    auto& c = pop.chain;
    c.run(pop.admin, cmd::AddMedication{"Metformin", "tablet", "850mg"});
    c.run(p, cmd::RequestAppointment{d.address(), slot("2026-01-04", 0), ""});
    EXPECT_EQ(c.run(d, cmd::Prescribe{1, 1, "daily"}).deny, Reason::AppointmentNotConfirmed);
    c.run(d, cmd::UpdateAppointment{1, AppointmentAction::Confirm, {}, ""});
    EXPECT_EQ(c.run(d, cmd::Prescribe{1, 7, "daily"}).deny, Reason::UnknownMedication);
    EXPECT_EQ(c.run(d2, cmd::Prescribe{1, 1, "daily"}).deny, Reason::NotYourAppointment);
    EXPECT_TRUE(c.run(d, cmd::Prescribe{1, 1, "twice daily"}).allowed());
    auto list = c.state().prescriptions_of(p.address());
    ASSERT_EQ(list.size(), 1u);
    EXPECT_EQ(list[0].dosage, "twice daily");
    EXPECT_EQ(c.state().appointments().at(1).prescription_ids, std::vector<std::uint64_t>{1});
}

TEST(Clinical, LabResultsNeedGrantAndFlagOutsideRange) {
    Population pop;
    auto p = pop.add("p", Role::Patient);
    auto d = pop.add("d", Role::Doctor);
    auto& c = pop.chain;
    c.run(pop.admin, cmd::AddLabParameter{"Potassium", "mmol/L", 3.5, 5.0});
    EXPECT_EQ(c.run(d, cmd::InputLabResult{p.address(), 1, 4.0}).deny, Reason::NoActiveGrant);
    c.run(p, cmd::GrantAccess{d.address()});
    EXPECT_EQ(c.run(d, cmd::InputLabResult{p.address(), 2, 4.0}).deny, Reason::UnknownParameter);
    for (double v : {3.5, 4.2, 5.0}) {
        ASSERT_TRUE(c.run(d, cmd::InputLabResult{p.address(), 1, v}).allowed());
        EXPECT_FALSE(c.state().lab_results().rbegin()->second.flagged) << v;
    }
    for (double v : {5.1, 3.4, -1.0}) {
        ASSERT_TRUE(c.run(d, cmd::InputLabResult{p.address(), 1, v}).allowed());
        EXPECT_TRUE(c.state().lab_results().rbegin()->second.flagged) << v;
    }
}

// ---- consent and records ----

TEST(Records, ConsentGate) {
    Population pop;
    auto p = pop.add("p", Role::Patient);
    auto p2 = pop.add("p2", Role::Patient);
    auto d = pop.add("d", Role::Doctor);
    auto d2 = pop.add("d2", Role::Doctor);
    auto& c = pop.chain;
    auto env = [&](std::vector<PublicKey> r) { return seal(as_view("Allergy: penicillin"), r); };

    EXPECT_EQ(c.run(d, cmd::AppendRecord{p.address(), env({p.public_key(), d.public_key()}), "note"}).deny,
              Reason::NoActiveGrant);
    EXPECT_TRUE(c.run(p, cmd::GrantAccess{d.address()}).allowed());
    EXPECT_EQ(c.run(p, cmd::GrantAccess{d.address()}).deny, Reason::DuplicateActiveGrant);
    EXPECT_EQ(c.run(d, cmd::AppendRecord{p.address(), env({d.public_key()}), "note"}).deny,
              Reason::PatientNotARecipient);
    EXPECT_TRUE(c.run(d, cmd::AppendRecord{p.address(), env({p.public_key(), d.public_key()}), "note"}).allowed());

    auto own = c.state().read_records(p.address(), p.address());
    ASSERT_TRUE(own.ok());
    ASSERT_EQ(own.value().size(), 1u);
    auto text = open(own.value()[0].envelope, p);
    EXPECT_EQ(std::string(text.begin(), text.end()), "Allergy: penicillin");

    auto by_doctor = c.state().read_records(d.address(), p.address());
    ASSERT_TRUE(by_doctor.ok());
    EXPECT_EQ(by_doctor.value(), own.value());
    EXPECT_EQ(c.state().read_records(d2.address(), p.address()).reason(), Reason::NoActiveGrant);
    EXPECT_EQ(c.state().read_records(p2.address(), p.address()).reason(), Reason::NotOwner);
    EXPECT_EQ(c.state().read_records(pop.admin.address(), p.address()).reason(), Reason::RoleMismatch);
    EXPECT_EQ(c.state().read_records(std::nullopt, p.address()).reason(), Reason::NotSignedIn);

    EXPECT_TRUE(c.run(p, cmd::RevokeAccess{d.address()}).allowed());
    EXPECT_EQ(c.run(p, cmd::RevokeAccess{d.address()}).deny, Reason::NoActiveGrant);
    EXPECT_EQ(c.state().read_records(d.address(), p.address()).reason(), Reason::NoActiveGrant);
    EXPECT_EQ(c.run(d, cmd::AppendRecord{p.address(), env({p.public_key()}), "note"}).deny, Reason::NoActiveGrant);
    // Re-granting after a revoke opens a fresh grant.
    EXPECT_TRUE(c.run(p, cmd::GrantAccess{d.address()}).allowed());
    EXPECT_EQ(c.state().grants().size(), 2u);
}

TEST(Records, IsolationBetweenPatients) {
    // Patient A's commands alone, then interleaved with patient B's: A's
    // records, grants and appointments come out the same.
    auto project = [](const EhrState& s, const Address& patient) {
        std::vector<std::tuple<Address, std::string, Digest>> recs;
        for (const auto& [_, r] : s.records())
            if (r.patient == patient) recs.emplace_back(r.author, r.kind, r.envelope.plaintext_digest);
        std::vector<std::pair<Address, bool>> grants;
        for (const auto& g : s.grants())
            if (g.patient == patient) grants.emplace_back(g.doctor, g.active());
        std::vector<std::pair<Slot, AppointmentStatus>> appts;
        for (const auto& [_, a] : s.appointments())
            if (a.patient == patient) appts.emplace_back(a.slot, a.status);
        return std::make_tuple(recs, grants, appts);
    };
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        std::mt19937_64 rng(seed);
        std::vector<std::pair<bool, int>> script;  // (is_b, step)
        for (int i = 0; i < 12; ++i) script.push_back({false, i});
        for (int i = 0; i < 12; ++i) script.insert(script.begin() + static_cast<long>(rng() % (script.size() + 1)), {true, i});

        auto run = [&](bool with_b) {
            Population pop;
            auto a = pop.add("pa", Role::Patient);
            auto b = pop.add("pb", Role::Patient);
            auto da = pop.add("da", Role::Doctor);
            auto db = pop.add("db", Role::Doctor);
            for (auto [is_b, i] : script) {
                if (is_b && !with_b) continue;
                const auto& pat = is_b ? b : a;
                const auto& doc = is_b ? db : da;
                auto date = "2026-01-0" + std::to_string(is_b ? 6 : 5);
                switch (i % 4) {
                    case 0: pop.chain.run(pat, cmd::GrantAccess{doc.address()}); break;
                    case 1:
                        pop.chain.run(doc, cmd::AppendRecord{pat.address(),
                                                             seal(as_view("r" + std::to_string(i)), {pat.public_key()}),
                                                             "k" + std::to_string(i)});
                        break;
                    case 2:
                        pop.chain.run(pat, cmd::RequestAppointment{doc.address(),
                                                                   slot(date.c_str(), static_cast<std::uint32_t>(i)), ""});
                        break;
                    case 3: pop.chain.run(pat, cmd::RevokeAccess{doc.address()}); break;
                }
            }
            return project(pop.chain.state(), a.address());
        };
        EXPECT_EQ(run(false), run(true)) << "seed " << seed;
    }
}

// ---- properties over random command sequences ----

class RandomProperties : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(RandomProperties, Invariants) {
    auto run = test::random_run(GetParam(), 400);
    const auto& s = run.chain.state();

    // Audit completeness: one entry per applied transaction plus genesis.
    EXPECT_EQ(s.audit_log().size(), run.txs.size() + 1);
    for (std::size_t i = 0; i < s.audit_log().size(); ++i) EXPECT_EQ(s.audit_log()[i].seq, i);

    // No double booking.
    std::map<std::pair<Address, Slot>, int> booked;
    for (const auto& [_, a] : s.appointments()) {
        if (a.status == AppointmentStatus::Cancelled) continue;
        EXPECT_EQ(++booked[std::make_pair(a.doctor, a.slot)], 1) << "double booking";
        EXPECT_GE(a.slot.date, s.system_vars().start_date);
    }

    // Consent gate over full history.
    for (const auto& [_, r] : s.records()) {
        bool granted = std::any_of(s.grants().begin(), s.grants().end(), [&](const AccessGrant& g) {
            return g.patient == r.patient && g.doctor == r.author && g.active_at_seq(r.created_seq);
        });
        EXPECT_TRUE(granted) << "record " << r.id << " without an active grant";
        EXPECT_TRUE(r.envelope.has_recipient(r.patient));
    }

    // Lab flags follow the reference range.
    for (const auto& [_, lr] : s.lab_results()) {
        const auto& p = s.lab_parameters().at(lr.parameter_id);
        EXPECT_EQ(lr.flagged, lr.value < p.low || lr.value > p.high);
    }

    // Plaintext never appears in state or exports.
    auto bytes = s.serialize();
    std::string exports;
    for (auto d : {ExportDataset::Users, ExportDataset::Medications, ExportDataset::LabParameters, ExportDataset::Audit})
        for (auto f : {ExportFormat::Csv, ExportFormat::Xml, ExportFormat::Txt}) exports += render_export(s, d, f);
    for (const auto& text : run.plaintexts) {
        EXPECT_FALSE(test::contains_bytes(bytes, as_view(text)));
        EXPECT_EQ(exports.find(text), std::string::npos);
    }

    // Admins never read records.
    for (const auto& p : run.patients) EXPECT_FALSE(s.read_records(run.admin.address(), p.address()).ok());
    for (const auto& e : s.audit_log())
        if (e.actor == run.admin.address())
            EXPECT_TRUE(e.op != OpKind::AppendRecord || !e.allowed());

    // Serialization round trip.
    auto back = EhrState::deserialize(bytes);
    EXPECT_EQ(back.state_root(), s.state_root());
}

// Replays each tx on its own: denials leave the root untouched, and two
// independent replays agree.
TEST_P(RandomProperties, DenyLeavesRootUnchangedAndReplayIsDeterministic) {
    auto run = test::random_run(GetParam(), 300);
    const auto& chain = run.chain.chain();
    EhrState a, b;
    std::size_t denies = 0;
    for (const auto& blk : chain.blocks()) {
        for (const auto& tx : blk.transactions) {
            auto before = a.state_root();
            const auto& e = a.apply(tx, blk.header.height, blk.header.timestamp);
            if (!e.allowed()) {
                ++denies;
                EXPECT_EQ(a.state_root(), before) << to_string(e.op) << " " << to_string(*e.deny);
            }
        }
        apply_block(b, blk);
        EXPECT_EQ(a.state_root(), b.state_root());
    }
    EXPECT_EQ(a.state_root(), run.chain.state().state_root());
    EXPECT_EQ(a.audit_log(), run.chain.state().audit_log());
    EXPECT_GT(denies, 10u);
}

INSTANTIATE_TEST_SUITE_P(Seeds, RandomProperties, ::testing::Values(1, 2, 3, 4, 5, 6, 7, 8));

TEST(Audit, UndecodableCommandIsAudited) {
    Population pop;
    auto p = pop.add("p", Role::Patient);
    pop.chain.add({pop.chain.raw_tx(p, Bytes{0xff})});
    const auto& e = pop.chain.state().audit_log().back();
    EXPECT_EQ(e.op, OpKind::Undecodable);
    EXPECT_EQ(e.deny, Reason::Malformed);
    EXPECT_EQ(pop.chain.state().next_nonce(p.address()), 2u);
}

TEST(Audit, VisibleToActorOrAdmin) {
    Population pop;
    auto p = pop.add("p", Role::Patient);
    auto d = pop.add("d", Role::Doctor);
    pop.chain.run(p, cmd::GrantAccess{d.address()});
    const auto& s = pop.chain.state();
    EXPECT_EQ(s.audit_visible_to(pop.admin.address()).size(), s.audit_log().size());
    for (const auto& e : s.audit_visible_to(p.address())) EXPECT_EQ(e.actor, p.address());
    EXPECT_EQ(s.audit_visible_to(p.address()).size(), 2u);
}
