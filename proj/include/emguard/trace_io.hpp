#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "emguard/signal_model.hpp"

namespace emguard {

enum class TraceFormat { Csv, Binary };

/// "csv" or "binary"/"bin"/"emtr".
TraceFormat parse_trace_format(const std::string& text);
/// Format implied by the file extension (.csv is CSV, anything else binary).
TraceFormat format_for_path(const std::filesystem::path& path);

/// Sidecar holding per-row label/SNR/seed records next to a trace file.
std::filesystem::path sidecar_path(const std::filesystem::path& path);

/// Writes the matrix plus its sidecar. `extra` is merged into the sidecar's
/// top-level object (used for run manifests).
void save_traces(const TraceMatrix& matrix, const std::filesystem::path& path, TraceFormat format,
                 const nlohmann::json& extra = nlohmann::json::object());

/// Reads a trace file. Row labels and metadata come from the sidecar when it
/// exists; a CSV without sidecar loads as all-benign.
TraceMatrix load_traces(const std::filesystem::path& path, TraceFormat format);

/// Top-level sidecar object, or an empty object when there is none.
nlohmann::json load_sidecar(const std::filesystem::path& path);

} // namespace emguard
