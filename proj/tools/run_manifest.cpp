#include "run_manifest.hpp"

#include <chrono>
#include <ctime>

#ifndef EMGUARD_VERSION
#define EMGUARD_VERSION "0.0.0"
#endif

namespace emguard::cli {

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

RunManifest RunManifest::start(std::string command, std::string config_path) {
    RunManifest m;
    m.command = std::move(command);
    m.config_path = std::move(config_path);
    m.tool_version = EMGUARD_VERSION;
    m.timestamp = utc_timestamp();
    return m;
}

nlohmann::json RunManifest::to_json() const {
    return {{"command", command},
            {"config_path", config_path.empty() ? nlohmann::json(nullptr) : nlohmann::json(config_path)},
            {"seed", seed ? nlohmann::json(*seed) : nlohmann::json(nullptr)},
            {"inputs", inputs},
            {"outputs", outputs},
            {"tool_version", tool_version},
            {"timestamp", timestamp},
            {"parameters", parameters}};
}

} // namespace emguard::cli
