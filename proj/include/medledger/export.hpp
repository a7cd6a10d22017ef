#pragma once

// Admin data export in CSV, XML and TXT. Output is a pure function of state.

#include <optional>
#include <string>
#include <string_view>

#include "medledger/ehr_state.hpp"

namespace medledger {

enum class ExportDataset { Users, Medications, LabParameters, Audit };
enum class ExportFormat { Csv, Xml, Txt };

std::string_view to_string(ExportDataset d);
std::string_view to_string(ExportFormat f);
// Case-insensitive; accepts "users", "medications", "lab-parameters" / "lab_parameters", "audit".
std::optional<ExportDataset> parse_dataset(std::string_view s);
std::optional<ExportFormat> parse_format(std::string_view s);

// Requires an Active admin caller; anyone else gets the check_access reason.
Outcome<std::string> export_data(const EhrState& state, const std::optional<Address>& caller, ExportDataset dataset,
                                 ExportFormat format);

// Rendering without the access check.
std::string render_export(const EhrState& state, ExportDataset dataset, ExportFormat format);

std::string format_double(double v);

}  // namespace medledger
