#include "medledger/export.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <utility>
#include <vector>

namespace medledger {

std::string_view to_string(ExportDataset d) {
    switch (d) {
        case ExportDataset::Users: return "users";
        case ExportDataset::Medications: return "medications";
        case ExportDataset::LabParameters: return "lab_parameters";
        case ExportDataset::Audit: return "audit";
    }
    return "unknown";
}

std::string_view to_string(ExportFormat f) {
    switch (f) {
        case ExportFormat::Csv: return "csv";
        case ExportFormat::Xml: return "xml";
        case ExportFormat::Txt: return "txt";
    }
    return "unknown";
}

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace

std::optional<ExportDataset> parse_dataset(std::string_view s) {
    auto l = lower(s);
    if (l == "users") return ExportDataset::Users;
    if (l == "medications") return ExportDataset::Medications;
    if (l == "lab_parameters" || l == "lab-parameters" || l == "labparameters") return ExportDataset::LabParameters;
    if (l == "audit") return ExportDataset::Audit;
    return std::nullopt;
}

std::optional<ExportFormat> parse_format(std::string_view s) {
    auto l = lower(s);
    if (l == "csv") return ExportFormat::Csv;
    if (l == "xml") return ExportFormat::Xml;
    if (l == "txt") return ExportFormat::Txt;
    return std::nullopt;
}

std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), end);
}

namespace {

struct Table {
    std::string root;  // XML root element
    std::string row;   // XML row element
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
};

Table build_table(const EhrState& state, ExportDataset dataset) {
    Table t;
    switch (dataset) {
        case ExportDataset::Users:
            t.root = "users";
            t.row = "user";
            t.columns = {"address", "role", "status", "name", "birth_date", "specialty", "registered_at"};
            for (const auto& [addr, a] : state.accounts())
                t.rows.push_back({addr.str(), std::string(to_string(a.role)), std::string(to_string(a.status)),
                                  a.profile.name, a.profile.birth_date, a.profile.specialty,
                                  std::to_string(a.registered_at)});
            break;
        case ExportDataset::Medications:
            t.root = "medications";
            t.row = "medication";
            t.columns = {"id", "name", "form", "strength", "added_by"};
            for (const auto& [id, m] : state.medications())
                t.rows.push_back({std::to_string(id), m.name, m.form, m.strength, m.added_by.str()});
            break;
        case ExportDataset::LabParameters:
            t.root = "lab_parameters";
            t.row = "lab_parameter";
            t.columns = {"id", "name", "unit", "low", "high"};
            for (const auto& [id, p] : state.lab_parameters())
                t.rows.push_back({std::to_string(id), p.name, p.unit, format_double(p.low), format_double(p.high)});
            break;
        case ExportDataset::Audit:
            t.root = "audit";
            t.row = "entry";
            t.columns = {"seq", "tx_hash", "actor", "operation", "outcome", "reason", "height", "timestamp"};
            for (const auto& e : state.audit_log())
                t.rows.push_back({std::to_string(e.seq), e.tx_hash.hex(), e.actor.str(), std::string(to_string(e.op)),
                                  e.allowed() ? "Allow" : "Deny",
                                  e.deny ? std::string(to_string(*e.deny)) : std::string(),
                                  std::to_string(e.height), std::to_string(e.timestamp)});
            break;
    }
    return t;
}

std::string csv_field(const std::string& f) {
    if (f.find_first_of(",\"\n\r") == std::string::npos) return f;
    std::string out = "\"";
    for (char c : f) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::string xml_escape(const std::string& f) {
    std::string out;
    for (char c : f) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&apos;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string render_csv(const Table& t) {
    std::string out;
    auto line = [&](const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out += ',';
            out += csv_field(fields[i]);
        }
        out += '\n';
    };
    line(t.columns);
    for (const auto& r : t.rows) line(r);
    return out;
}

std::string render_xml(const Table& t) {
    std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<" + t.root + ">\n";
    for (const auto& r : t.rows) {
        out += "  <" + t.row + ">\n";
        for (std::size_t i = 0; i < t.columns.size(); ++i) {
            const auto& c = t.columns[i];
            if (r[i].empty())
                out += "    <" + c + "/>\n";
            else
                out += "    <" + c + ">" + xml_escape(r[i]) + "</" + c + ">\n";
        }
        out += "  </" + t.row + ">\n";
    }
    out += "</" + t.root + ">\n";
    return out;
}

// Newlines inside values would break the line grammar; they are escaped as \n.
std::string txt_value(const std::string& f) {
    std::string out;
    for (char c : f) {
        if (c == '\n')
            out += "\\n";
        else if (c == '\r')
            out += "\\r";
        else if (c == '\\')
            out += "\\\\";
        else
            out += c;
    }
    return out;
}

std::string render_txt(const Table& t) {
    std::string out;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (r) out += '\n';
        for (std::size_t i = 0; i < t.columns.size(); ++i) out += t.columns[i] + ": " + txt_value(t.rows[r][i]) + "\n";
    }
    return out;
}

}  // namespace

std::string render_export(const EhrState& state, ExportDataset dataset, ExportFormat format) {
    auto t = build_table(state, dataset);
    switch (format) {
        case ExportFormat::Csv: return render_csv(t);
        case ExportFormat::Xml: return render_xml(t);
        case ExportFormat::Txt: return render_txt(t);
    }
    return {};
}

Outcome<std::string> export_data(const EhrState& state, const std::optional<Address>& caller, ExportDataset dataset,
                                 ExportFormat format) {
    if (auto d = state.check_access(caller, OpKind::ExportData); !d) return Outcome<std::string>::denied(d.reason());
    return render_export(state, dataset, format);
}

}  // namespace medledger
