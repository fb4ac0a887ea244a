#include "manifest.hpp"

#include "mixstage/binio.hpp"
#include "mixstage/error.hpp"

#include <chrono>
#include <ctime>

#ifndef MIXSTAGE_SOURCE_REVISION
#define MIXSTAGE_SOURCE_REVISION "unknown"
#endif

namespace mixstage::cli {

std::string RunManifest::config_hash() const { return binio::hex(binio::sha256(config.dump())); }

nlohmann::json RunManifest::to_json() const {
    return {
        {"command", command},
        {"argv", argv},
        {"config", config},
        {"config_sources", sources},
        {"config_hash", config_hash()},
        {"seed", seed},
        {"source_revision", source_revision},
        {"started_at", started_at},
        {"finished_at", finished_at},
        {"outputs", outputs},
    };
}

std::string source_revision() { return MIXSTAGE_SOURCE_REVISION; }

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_manifest(const RunManifest& m, const std::string& path) {
    binio::write_file_atomic(path, m.to_json().dump(2) + "\n");
}

RunManifest read_manifest(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(binio::read_file(path));
        RunManifest m;
        m.command = j.at("command").get<std::string>();
        m.argv = j.at("argv").get<std::vector<std::string>>();
        m.config = j.at("config");
        m.sources = j.at("config_sources");
        m.seed = j.at("seed").get<std::uint64_t>();
        m.source_revision = j.at("source_revision").get<std::string>();
        m.started_at = j.at("started_at").get<std::string>();
        m.finished_at = j.at("finished_at").get<std::string>();
        m.outputs = j.at("outputs").get<std::vector<std::string>>();
        if (j.at("config_hash").get<std::string>() != m.config_hash())
            throw FormatError(path, 0, "config hash does not match the recorded config");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path, 0, e.what());
    }
}

}  // namespace mixstage::cli
