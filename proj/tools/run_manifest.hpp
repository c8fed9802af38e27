#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace emguard::cli {

/// Provenance block embedded in every artifact the CLI writes.
struct RunManifest {
    std::string command;
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::string tool_version;
    std::string timestamp;
    nlohmann::json parameters = nlohmann::json::object();

    static RunManifest start(std::string command, std::string config_path);
    nlohmann::json to_json() const;
};

/// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

} // namespace emguard::cli
