#include <gtest/gtest.h>

#include <httplib.h>

#include <nlohmann/json.hpp>
#include <thread>

#include "service_harness.hpp"
#include "medledger/export.hpp"
#include "medledger/service.hpp"

using namespace medledger;
using nlohmann::json;

namespace {

class Api : public ::testing::Test, public test::ServiceHarness {};

}  // namespace

TEST_F(Api, EveryGuardedEndpointMatchesCheckAccess) {
    auto parity = http_parity();
    // 12 guarded reads and 13 command kinds, five signed-in callers plus anonymous each.
    EXPECT_EQ(parity.checked, (12u + 13u) * 6u);
    EXPECT_GT(parity.forbidden, 50u);
    for (const auto& m : parity.mismatches) ADD_FAILURE() << m;
}

TEST_F(Api, UnknownTokenIsUnauthorized) {
    for (const auto& rule : endpoint_rules()) {
        if (!rule.op) continue;
        auto r = get(path_for(rule), "0badc0de");
        EXPECT_EQ(r->status, 401) << rule.path;
        EXPECT_EQ(reason_of(r), "NotSignedIn");
    }
}

TEST_F(Api, AuthFlow) {
    // Unknown accounts get a challenge but cannot log in.
    auto ch = challenge(nobody);
    auto n = ch["nonce"].get<std::string>();
    EXPECT_EQ(ch["message"], login_message(nobody.address(), n));
    auto sig = nobody.sign(as_view(login_message(nobody.address(), n)));
    EXPECT_EQ(post("/auth/login", {{"address", nobody.address().str()}, {"nonce", n}, {"signature", sig.hex()}})->status,
              404);

    // Wrong signer; the challenge is consumed even on failure.
    ch = challenge(patient);
    n = ch["nonce"].get<std::string>();
    auto bad = doctor.sign(as_view(login_message(patient.address(), n)));
    json body = {{"address", patient.address().str()}, {"nonce", n}, {"signature", bad.hex()}};
    auto r = post("/auth/login", body);
    EXPECT_EQ(r->status, 401);
    EXPECT_EQ(reason_of(r), "BadSignature");
    body["signature"] = patient.sign(as_view(login_message(patient.address(), n))).hex();
    EXPECT_EQ(reason_of(post("/auth/login", body)), "UnknownChallenge");

    // A challenge for one address does not work for another.
    ch = challenge(patient);
    n = ch["nonce"].get<std::string>();
    r = post("/auth/login", {{"address", doctor.address().str()},
                             {"nonce", n},
                             {"signature", doctor.sign(as_view(login_message(doctor.address(), n))).hex()}});
    EXPECT_EQ(reason_of(r), "UnknownChallenge");

    ch = challenge(patient);
    n = ch["nonce"].get<std::string>();
    *now += 10'000;
    r = post("/auth/login", {{"address", patient.address().str()},
                             {"nonce", n},
                             {"signature", patient.sign(as_view(login_message(patient.address(), n))).hex()}});
    EXPECT_EQ(reason_of(r), "ChallengeExpired");

    EXPECT_EQ(post("/auth/challenge", {{"address", "0x12"}})->status, 400);
    EXPECT_EQ(client().Post("/auth/challenge", "not json", "application/json")->status, 400);
    EXPECT_EQ(post("/auth/login", {{"address", patient.address().str()}})->status, 400);

    auto token = login(patient);
    auto me = get("/me", token);
    ASSERT_EQ(me->status, 200);
    auto j = json::parse(me->body);
    EXPECT_EQ(j["address"], patient.address().str());
    EXPECT_EQ(j["role"], "Patient");
    EXPECT_EQ(j["next_nonce"], node->pending_nonce(patient.address()));

    EXPECT_EQ(post("/auth/logout", json::object(), token)->status, 200);
    EXPECT_EQ(get("/me", token)->status, 401);

    token = login(patient);
    *now += 59'000;
    EXPECT_EQ(get("/me", token)->status, 200);
    *now += 1'000;
    r = get("/me", token);
    EXPECT_EQ(r->status, 401);
    EXPECT_EQ(reason_of(r), "SessionExpired");
    EXPECT_EQ(reason_of(get("/me", token)), "NotSignedIn");
}

TEST_F(Api, PendingAccountMayLogInButNotAct) {
    auto token = login(pending);
    auto r = get("/me", token);
    EXPECT_EQ(r->status, 403);
    EXPECT_EQ(reason_of(r), "Inactive");
}

TEST_F(Api, TransactionStatuses) {
    auto token = login(admin);

    // Self-registration needs no session.
    auto fresh = test::key("fresh");
    auto reg = tx(fresh, cmd::RegisterUser{Role::Patient, fresh.public_key(), {"F", "", ""}});
    auto r = post_tx(reg, "");
    ASSERT_EQ(r->status, 202) << r->body;
    auto j = json::parse(r->body);
    EXPECT_EQ(j["status"], "Pending");
    EXPECT_FALSE(j.contains("height"));
    EXPECT_EQ(post_tx(reg, "")->status, 200);

    auto t = tx(admin, cmd::AddMedication{"M", "tablet", "1mg"});
    EXPECT_EQ(post_tx(t, token)->status, 202);
    commit();
    r = post_tx(t, token);
    EXPECT_EQ(r->status, 200);
    EXPECT_EQ(json::parse(r->body)["status"], "Committed");

    r = get("/tx/" + t.tx_hash.hex());
    ASSERT_EQ(r->status, 200);
    j = json::parse(r->body);
    EXPECT_EQ(j["status"], "Committed");
    EXPECT_EQ(j["height"], node->height());
    EXPECT_EQ(get("/tx/0x" + reg.tx_hash.hex())->status, 200);
    EXPECT_EQ(get("/tx/" + std::string(64, '0'))->status, 404);

    auto skip = build_transaction(admin, node->pending_nonce(admin.address()) + 3, cmd::AddMedication{"N", "t", "1"},
                                  test::kEpoch);
    r = post_tx(skip, token);
    EXPECT_EQ(r->status, 409);
    EXPECT_EQ(reason_of(r), "NonceMismatch");

    auto forged = tx(admin, cmd::AddMedication{"N", "t", "1"});
    forged.signature.data[3] ^= 0x40;
    r = post_tx(forged, token);
    EXPECT_EQ(r->status, 400);
    EXPECT_EQ(reason_of(r), "BadSignature");

    r = post_tx(tx(patient, cmd::AddMedication{"N", "t", "1"}), token);
    EXPECT_EQ(r->status, 403);
    EXPECT_EQ(reason_of(r), "SenderMismatch");

    EXPECT_EQ(post("/tx", {{"tx", "zz"}}, token)->status, 400);
    EXPECT_EQ(post("/tx", {{"nothing", 1}}, token)->status, 400);
    Writer w;
    encode(w, t);
    auto hex = to_hex(w.data());
    EXPECT_EQ(post("/tx", {{"tx", hex + "00"}}, token)->status, 400);
}

TEST_F(Api, TakenSlotIsAConflict) {
    auto p2 = test::key("p2");
    submit(p2, cmd::RegisterUser{Role::Patient, p2.public_key(), {"P2", "", ""}});
    commit();
    submit(admin, cmd::SetUserStatus{p2.address(), AccountStatus::Active});
    commit();
    auto token = login(p2);
    auto r = post_tx(tx(p2, cmd::RequestAppointment{doctor.address(), {kDay, 2}, ""}), token);
    EXPECT_EQ(r->status, 409);
    EXPECT_EQ(reason_of(r), "SlotTaken");
    EXPECT_EQ(post_tx(tx(p2, cmd::RequestAppointment{doctor.address(), {kDay, 3}, ""}), token)->status, 202);
}

TEST_F(Api, ReadViews) {
    auto pt = login(patient);
    auto dt = login(doctor);
    auto slots = json::parse(get("/doctors/" + doctor.address().str() + "/slots?date=2026-01-05", pt)->body);
    EXPECT_EQ(slots["free"].size(), 15u);
    for (const auto& i : slots["free"]) EXPECT_NE(i, 2);
    EXPECT_EQ(get("/doctors/" + patient.address().str() + "/slots?date=2026-01-05", pt)->status, 404);
    EXPECT_EQ(get("/doctors/" + doctor.address().str() + "/slots?date=bad", pt)->status, 400);
    EXPECT_EQ(get("/doctors/" + doctor.address().str() + "/slots?date=2025-12-01", pt)->status, 400);

    auto appts = json::parse(get("/appointments", dt)->body)["appointments"];
    ASSERT_EQ(appts.size(), 1u);
    EXPECT_EQ(appts[0]["patient"], patient.address().str());
    EXPECT_EQ(appts[0]["status"], "Requested");

    auto docs = json::parse(get("/doctors", pt)->body)["doctors"];
    ASSERT_EQ(docs.size(), 1u);  // the inactive doctor is not listed
    EXPECT_EQ(docs[0]["address"], doctor.address().str());

    // A doctor without a grant is refused by the consent gate.
    submit(patient, cmd::RevokeAccess{doctor.address()});
    commit();
    auto r = get("/patients/" + patient.address().str() + "/records", dt);
    EXPECT_EQ(r->status, 403);
    EXPECT_EQ(reason_of(r), "NoActiveGrant");
    EXPECT_EQ(get("/patients/" + patient.address().str() + "/records", pt)->status, 200);

    auto audit = json::parse(get("/audit", pt)->body)["entries"];
    for (const auto& e : audit) EXPECT_EQ(e["actor"], patient.address().str());
    EXPECT_FALSE(audit.empty());
}

TEST_F(Api, ExportContentTypes) {
    auto token = login(admin);
    auto state = node->state();
    for (auto [name, type, format] : {std::tuple{"csv", "text/csv", ExportFormat::Csv},
                                      std::tuple{"xml", "application/xml", ExportFormat::Xml},
                                      std::tuple{"txt", "text/plain", ExportFormat::Txt}}) {
        for (auto dataset : {"users", "medications", "lab_parameters", "audit"}) {
            auto r = get(std::string("/admin/export?dataset=") + dataset + "&format=" + name, token);
            ASSERT_EQ(r->status, 200);
            EXPECT_EQ(r->get_header_value("Content-Type"), type);
            EXPECT_EQ(r->body, export_data(*state, admin.address(), *parse_dataset(dataset), format).value());
        }
    }
    EXPECT_EQ(get("/admin/export?dataset=secrets", token)->status, 400);
    EXPECT_EQ(get("/admin/export?dataset=users&format=pdf", token)->status, 400);
}

TEST_F(Api, Health) {
    auto r = get("/health");
    ASSERT_EQ(r->status, 200);
    auto j = json::parse(r->body);
    EXPECT_EQ(j["status"], "ok");
    EXPECT_EQ(j["height"], node->height());
    EXPECT_EQ(j["tip"], node->tip_hash().hex());
    EXPECT_EQ(j["producer"], admin.address().str());
}

TEST(ApiRules, EveryReadOperationHasAnEndpoint) {
    std::set<OpKind> guarded;
    for (const auto& r : endpoint_rules())
        if (r.op) guarded.insert(*r.op);
    for (auto op : {OpKind::ReadProfile, OpKind::ReadRecords, OpKind::ReadAppointments, OpKind::ReadFreeSlots,
                    OpKind::ReadPrescriptions, OpKind::ReadLabResults, OpKind::ReadDoctors, OpKind::ReadUsers,
                    OpKind::ReadCatalogs, OpKind::ExportData, OpKind::ReadAudit})
        EXPECT_TRUE(guarded.contains(op)) << to_string(op);
}
