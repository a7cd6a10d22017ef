#include "medledger/service.hpp"

#include <httplib.h>

#include <map>
#include <mutex>
#include <nlohmann/json.hpp>

#include "medledger/export.hpp"

namespace medledger {

using nlohmann::json;

const std::vector<EndpointRule>& endpoint_rules() {
    static const std::vector<EndpointRule> rules = {
        {"POST", "/auth/challenge", std::nullopt, false},
        {"POST", "/auth/login", std::nullopt, false},
        {"POST", "/auth/logout", std::nullopt, true},
        {"POST", "/tx", std::nullopt, true},  // guarded by the command's own kind
        {"GET", "/tx/{hash}", std::nullopt, false},
        {"GET", "/health", std::nullopt, false},
        {"GET", "/me", OpKind::ReadProfile, true},
        {"GET", "/patients/{addr}/records", OpKind::ReadRecords, true},
        {"GET", "/doctors/{addr}/slots", OpKind::ReadFreeSlots, true},
        {"GET", "/doctors", OpKind::ReadDoctors, true},
        {"GET", "/appointments", OpKind::ReadAppointments, true},
        {"GET", "/prescriptions", OpKind::ReadPrescriptions, true},
        {"GET", "/lab-results", OpKind::ReadLabResults, true},
        {"GET", "/admin/users", OpKind::ReadUsers, true},
        {"GET", "/admin/medications", OpKind::ReadCatalogs, true},
        {"GET", "/admin/lab-parameters", OpKind::ReadCatalogs, true},
        {"GET", "/admin/export", OpKind::ExportData, true},
        {"GET", "/audit", OpKind::ReadAudit, true},
    };
    return rules;
}

std::string login_message(const Address& address, std::string_view nonce_hex) {
    return "medledger login " + address.str() + " " + std::string(nonce_hex);
}

namespace {

json profile_json(const Profile& p) {
    return {{"name", p.name}, {"birth_date", p.birth_date}, {"specialty", p.specialty}};
}

json account_json(const Account& a) {
    return {{"address", a.address.str()},
            {"role", to_string(a.role)},
            {"status", to_string(a.status)},
            {"profile", profile_json(a.profile)},
            {"registered_at", a.registered_at}};
}

json slot_json(const Slot& s) { return {{"date", format_date(s.date)}, {"index", s.index}}; }

json appointment_json(const Appointment& a) {
    return {{"id", a.id},
            {"patient", a.patient.str()},
            {"doctor", a.doctor.str()},
            {"slot", slot_json(a.slot)},
            {"status", to_string(a.status)},
            {"notes", a.notes},
            {"prescription_ids", a.prescription_ids}};
}

json prescription_json(const Prescription& p) {
    return {{"id", p.id},           {"appointment_id", p.appointment_id}, {"doctor", p.doctor.str()},
            {"patient", p.patient.str()}, {"medication_id", p.medication_id},   {"dosage", p.dosage},
            {"issued_at", p.issued_at}};
}

json lab_result_json(const LabResult& r) {
    return {{"id", r.id},         {"patient", r.patient.str()}, {"doctor", r.doctor.str()},
            {"parameter_id", r.parameter_id}, {"value", r.value}, {"flagged", r.flagged},
            {"issued_at", r.issued_at}};
}

json record_json(const SealedRecord& r) {
    Writer w;
    encode(w, r.envelope);
    json recipients = json::array();
    for (const auto& [a, _] : r.envelope.wrapped_keys) recipients.push_back(a.str());
    return {{"id", r.id},
            {"patient", r.patient.str()},
            {"author", r.author.str()},
            {"kind", r.kind},
            {"created_at", r.created_at},
            {"recipients", recipients},
            {"envelope", to_hex(w.data())}};
}

json audit_json(const AuditEntry& e) {
    json j = {{"seq", e.seq},       {"tx_hash", e.tx_hash.hex()}, {"actor", e.actor.str()},
              {"operation", to_string(e.op)}, {"outcome", e.allowed() ? "Allow" : "Deny"}, {"height", e.height},
              {"timestamp", e.timestamp}};
    if (e.deny) j["reason"] = to_string(*e.deny);
    return j;
}

json receipt_json(const TxReceipt& r) {
    json j = {{"tx_hash", r.tx_hash.hex()}, {"status", to_string(r.status)}};
    if (r.status != ReceiptStatus::Pending) j["height"] = r.height;
    if (!r.reason.empty()) j["reason"] = r.reason;
    return j;
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view reason) {
    static const std::map<int, std::string> codes = {{400, "bad_request"}, {401, "unauthorized"}, {403, "forbidden"},
                                                     {404, "not_found"},   {409, "conflict"},     {503, "unavailable"}};
    send_json(res, status, {{"error", codes.at(status)}, {"reason", reason}});
}

std::optional<json> parse_body(const httplib::Request& req, httplib::Response& res) {
    try {
        auto j = json::parse(req.body);
        if (!j.is_object()) throw std::invalid_argument("not an object");
        return j;
    } catch (const std::exception&) {
        send_error(res, 400, "Malformed");
        return std::nullopt;
    }
}

std::optional<std::string> string_field(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) return std::nullopt;
    return it->get<std::string>();
}

}  // namespace

struct ApiService::Impl {
    struct Challenge {
        Address address;
        std::int64_t expires_at = 0;
    };
    struct Session {
        Address address;
        Role role = Role::Patient;
        std::int64_t created_at = 0;
        std::int64_t expires_at = 0;
    };

    LedgerNode& node;
    ServiceOptions options;
    httplib::Server server;
    std::mutex mu;
    std::map<std::string, Challenge> challenges;
    std::map<std::string, Session> sessions;

    Impl(LedgerNode& n, ServiceOptions o) : node(n), options(std::move(o)) { routes(); }

    std::int64_t now() const { return options.clock(); }

    std::optional<std::string> token_of(const httplib::Request& req) const {
        auto h = req.get_header_value("Authorization");
        constexpr std::string_view prefix = "Bearer ";
        if (!h.starts_with(prefix)) return std::nullopt;
        return h.substr(prefix.size());
    }

    // Sends 401 and returns nullopt when the request has no live session.
    std::optional<Address> session(const httplib::Request& req, httplib::Response& res) {
        auto token = token_of(req);
        std::lock_guard lock(mu);
        if (token) {
            auto it = sessions.find(*token);
            if (it != sessions.end()) {
                if (it->second.expires_at > now()) return it->second.address;
                sessions.erase(it);
                send_error(res, 401, "SessionExpired");
                return std::nullopt;
            }
        }
        send_error(res, 401, "NotSignedIn");
        return std::nullopt;
    }

    // Session plus check_access; sends 401/403 itself on failure.
    std::optional<std::pair<Address, std::shared_ptr<const EhrState>>> authorize(const httplib::Request& req,
                                                                                  httplib::Response& res, OpKind op) {
        auto who = session(req, res);
        if (!who) return std::nullopt;
        auto state = node.state();
        if (auto d = state->check_access(who, op); !d) {
            send_error(res, 403, to_string(d.reason()));
            return std::nullopt;
        }
        return std::make_pair(*who, std::move(state));
    }

    void routes() {
        server.Post("/auth/challenge", [this](const httplib::Request& req, httplib::Response& res) {
            auto body = parse_body(req, res);
            if (!body) return;
            auto addr_text = string_field(*body, "address");
            Address addr;
            try {
                if (!addr_text) throw std::invalid_argument("missing");
                addr = Address::parse(*addr_text);
            } catch (const std::exception&) {
                return send_error(res, 400, "Malformed");
            }
            auto nonce = to_hex(random_bytes(32));
            auto expires = now() + static_cast<std::int64_t>(options.challenge_ttl_ms);
            {
                std::lock_guard lock(mu);
                for (auto it = challenges.begin(); it != challenges.end();)
                    it = it->second.expires_at <= now() ? challenges.erase(it) : std::next(it);
                challenges[nonce] = Challenge{addr, expires};
            }
            send_json(res, 200,
                      {{"address", addr.str()},
                       {"nonce", nonce},
                       {"message", login_message(addr, nonce)},
                       {"expires_at", expires}});
        });

        server.Post("/auth/login", [this](const httplib::Request& req, httplib::Response& res) {
            auto body = parse_body(req, res);
            if (!body) return;
            auto addr_text = string_field(*body, "address");
            auto nonce = string_field(*body, "nonce");
            auto sig_text = string_field(*body, "signature");
            Address addr;
            Signature sig;
            try {
                if (!addr_text || !nonce || !sig_text) throw std::invalid_argument("missing field");
                addr = Address::parse(*addr_text);
                sig = Signature::from_hex(*sig_text);
            } catch (const std::exception&) {
                return send_error(res, 400, "Malformed");
            }
            Challenge ch;
            {
                std::lock_guard lock(mu);
                auto it = challenges.find(*nonce);
                if (it == challenges.end() || it->second.address != addr) return send_error(res, 401, "UnknownChallenge");
                ch = it->second;
                challenges.erase(it);  // single use, whatever the outcome
            }
            if (ch.expires_at <= now()) return send_error(res, 401, "ChallengeExpired");
            auto state = node.state();
            const auto* acc = state->find_account(addr);
            if (!acc) return send_error(res, 404, "UnknownAccount");
            auto msg = login_message(addr, *nonce);
            if (!verify(acc->public_key, as_view(msg), sig)) return send_error(res, 401, "BadSignature");
            auto token = to_hex(random_bytes(32));
            Session s{addr, acc->role, now(), now() + static_cast<std::int64_t>(options.session_ttl_ms)};
            {
                std::lock_guard lock(mu);
                sessions[token] = s;
            }
            send_json(res, 200,
                      {{"token", token},
                       {"address", addr.str()},
                       {"role", to_string(s.role)},
                       {"status", to_string(acc->status)},
                       {"expires_at", s.expires_at}});
        });

        server.Post("/auth/logout", [this](const httplib::Request& req, httplib::Response& res) {
            if (!session(req, res)) return;
            std::lock_guard lock(mu);
            sessions.erase(*token_of(req));
            send_json(res, 200, {{"logged_out", true}});
        });

        server.Post("/tx", [this](const httplib::Request& req, httplib::Response& res) { submit(req, res); });

        server.Get(R"(/tx/(0x)?([0-9a-fA-F]{64}))", [this](const httplib::Request& req, httplib::Response& res) {
            auto r = node.receipt(Digest::from_hex(req.matches[2].str()));
            if (!r) return send_error(res, 404, "UnknownTransaction");
            send_json(res, 200, receipt_json(*r));
        });

        server.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
            auto fatal = node.fatal_error();
            json j = {{"status", fatal ? "fatal" : "ok"},
                      {"height", node.height()},
                      {"tip", node.tip_hash().hex()},
                      {"mempool", node.mempool_size()},
                      {"producer", node.producer().str()}};
            if (fatal) j["error"] = *fatal;
            send_json(res, fatal ? 503 : 200, j);
        });

        server.Get("/me", [this](const httplib::Request& req, httplib::Response& res) {
            auto a = authorize(req, res, OpKind::ReadProfile);
            if (!a) return;
            auto j = account_json(*a->second->find_account(a->first));
            j["next_nonce"] = node.pending_nonce(a->first);
            send_json(res, 200, j);
        });

        server.Get(R"(/patients/([^/]+)/records)", [this](const httplib::Request& req, httplib::Response& res) {
            auto a = authorize(req, res, OpKind::ReadRecords);
            if (!a) return;
            Address patient;
            try {
                patient = Address::parse(req.matches[1].str());
            } catch (const std::exception&) {
                return send_error(res, 400, "Malformed");
            }
            auto out = a->second->read_records(a->first, patient);
            if (!out.ok()) return send_error(res, 403, to_string(out.reason()));
            json arr = json::array();
            for (const auto& r : out.value()) arr.push_back(record_json(r));
            send_json(res, 200, {{"patient", patient.str()}, {"records", arr}});
        });

        server.Get(R"(/doctors/([^/]+)/slots)", [this](const httplib::Request& req, httplib::Response& res) {
            auto a = authorize(req, res, OpKind::ReadFreeSlots);
            if (!a) return;
            Address doctor;
            Date date = 0;
            try {
                doctor = Address::parse(req.matches[1].str());
                date = parse_date(req.get_param_value("date"));
            } catch (const std::exception&) {
                return send_error(res, 400, "Malformed");
            }
            const auto* acc = a->second->find_account(doctor);
            if (!acc || acc->role != Role::Doctor) return send_error(res, 404, "UnknownTarget");
            auto free = a->second->list_free_slots(doctor, date);
            if (!free.ok()) return send_error(res, 400, to_string(free.reason()));
            send_json(res, 200, {{"doctor", doctor.str()}, {"date", format_date(date)}, {"free", free.value()}});
        });

        server.Get("/doctors", [this](const httplib::Request& req, httplib::Response& res) {
            auto a = authorize(req, res, OpKind::ReadDoctors);
            if (!a) return;
            json arr = json::array();
            for (const auto& d : a->second->active_doctors())
                arr.push_back({{"address", d.address.str()}, {"name", d.profile.name}, {"specialty", d.profile.specialty}});
            send_json(res, 200, {{"doctors", arr}});
        });

        server.Get("/appointments", [this](const httplib::Request& req, httplib::Response& res) {
            auto a = authorize(req, res, OpKind::ReadAppointments);
            if (!a) return;
            json arr = json::array();
            for (const auto& x : a->second->appointments_of(a->first)) arr.push_back(appointment_json(x));
            send_json(res, 200, {{"appointments", arr}});
        });

        server.Get("/prescriptions", [this](const httplib::Request& req, httplib::Response& res) {
            auto a = authorize(req, res, OpKind::ReadPrescriptions);
            if (!a) return;
            json arr = json::array();
            for (const auto& x : a->second->prescriptions_of(a->first)) arr.push_back(prescription_json(x));
            send_json(res, 200, {{"prescriptions", arr}});
        });

        server.Get("/lab-results", [this](const httplib::Request& req, httplib::Response& res) {
            auto a = authorize(req, res, OpKind::ReadLabResults);
            if (!a) return;
            json arr = json::array();
            for (const auto& x : a->second->lab_results_of(a->first)) arr.push_back(lab_result_json(x));
            send_json(res, 200, {{"lab_results", arr}});
        });

        server.Get("/admin/users", [this](const httplib::Request& req, httplib::Response& res) {
            auto a = authorize(req, res, OpKind::ReadUsers);
            if (!a) return;
            json arr = json::array();
            for (const auto& [_, acc] : a->second->accounts()) arr.push_back(account_json(acc));
            send_json(res, 200, {{"users", arr}});
        });

        server.Get("/admin/medications", [this](const httplib::Request& req, httplib::Response& res) {
            auto a = authorize(req, res, OpKind::ReadCatalogs);
            if (!a) return;
            json arr = json::array();
            for (const auto& [_, m] : a->second->medications())
                arr.push_back({{"id", m.id},
                               {"name", m.name},
                               {"form", m.form},
                               {"strength", m.strength},
                               {"added_by", m.added_by.str()}});
            send_json(res, 200, {{"medications", arr}});
        });

        server.Get("/admin/lab-parameters", [this](const httplib::Request& req, httplib::Response& res) {
            auto a = authorize(req, res, OpKind::ReadCatalogs);
            if (!a) return;
            json arr = json::array();
            for (const auto& [_, p] : a->second->lab_parameters())
                arr.push_back({{"id", p.id}, {"name", p.name}, {"unit", p.unit}, {"low", p.low}, {"high", p.high}});
            send_json(res, 200, {{"lab_parameters", arr}});
        });

        server.Get("/admin/export", [this](const httplib::Request& req, httplib::Response& res) {
            auto a = authorize(req, res, OpKind::ExportData);
            if (!a) return;
            auto dataset = parse_dataset(req.get_param_value("dataset"));
            auto format = parse_format(req.has_param("format") ? req.get_param_value("format") : "csv");
            if (!dataset || !format) return send_error(res, 400, "Malformed");
            auto out = export_data(*a->second, a->first, *dataset, *format);
            if (!out.ok()) return send_error(res, 403, to_string(out.reason()));
            const char* type = *format == ExportFormat::Csv   ? "text/csv"
                               : *format == ExportFormat::Xml ? "application/xml"
                                                              : "text/plain";
            res.status = 200;
            res.set_content(out.value(), type);
        });

        server.Get("/audit", [this](const httplib::Request& req, httplib::Response& res) {
            auto a = authorize(req, res, OpKind::ReadAudit);
            if (!a) return;
            json arr = json::array();
            for (const auto& e : a->second->audit_visible_to(a->first)) arr.push_back(audit_json(e));
            send_json(res, 200, {{"entries", arr}});
        });
    }

    void submit(const httplib::Request& req, httplib::Response& res) {
        auto body = parse_body(req, res);
        if (!body) return;
        SignedTransaction tx;
        Command command;
        try {
            auto hex = string_field(*body, "tx");
            if (!hex) throw DecodeError("missing tx");
            auto bytes = from_hex(*hex);
            Reader r(bytes);
            tx = decode_transaction(r);
            r.expect_end();
            command = decode_command(tx.command);
        } catch (const std::exception&) {
            return send_error(res, 400, "Malformed");
        }

        auto op = op_kind_of(command);
        auto state = node.state();
        // Self-registration is the one command that needs no session.
        if (op != OpKind::RegisterUser) {
            auto who = session(req, res);
            if (!who) return;
            if (*who != tx.sender) return send_error(res, 403, "SenderMismatch");
            if (auto d = state->check_access(who, op); !d) return send_error(res, 403, to_string(d.reason()));
        }

        // Slot conflicts visible in committed state are reported up front.
        if (const auto* ra = std::get_if<cmd::RequestAppointment>(&command)) {
            auto free = state->list_free_slots(ra->doctor, ra->slot.date);
            if (free.ok() && std::find(free.value().begin(), free.value().end(), ra->slot.index) == free.value().end() &&
                ra->slot.index < state->system_vars().slots_per_day)
                return send_error(res, 409, "SlotTaken");
        }

        if (auto known = node.receipt(tx.tx_hash)) return send_json(res, 200, receipt_json(*known));
        auto receipt = node.submit(tx);
        if (receipt.status == ReceiptStatus::Rejected)
            return send_error(res, receipt.reason == "NonceMismatch" ? 409 : 400, receipt.reason);
        send_json(res, receipt.status == ReceiptStatus::Pending ? 202 : 200, receipt_json(receipt));
    }
};

ApiService::ApiService(LedgerNode& node, ServiceOptions options)
    : impl_(std::make_unique<Impl>(node, std::move(options))) {}

ApiService::~ApiService() { stop(); }

int ApiService::bind(const std::string& host, int port) {
    if (port == 0) return impl_->server.bind_to_any_port(host);
    return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool ApiService::serve() { return impl_->server.listen_after_bind(); }

void ApiService::stop() {
    if (impl_) impl_->server.stop();
}

}  // namespace medledger
