#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace mixstage::cli {

/// Provenance record of one command invocation.
struct RunManifest {
    std::string command;
    std::vector<std::string> argv;
    nlohmann::json config = nlohmann::json::object();   ///< resolved values
    nlohmann::json sources = nlohmann::json::object();  ///< "cli" | "config" | "default" per key
    std::uint64_t seed = 0;
    std::string source_revision;
    std::string started_at;
    std::string finished_at;
    std::vector<std::string> outputs;

    /// Hex SHA-256 of the canonical dump of `config`.
    std::string config_hash() const;
    nlohmann::json to_json() const;
};

/// Revision baked in at configure time, "unknown" outside a git checkout.
std::string source_revision();

/// Current UTC time, ISO 8601 with seconds.
std::string utc_timestamp();

/// Atomic write (temporary file plus rename).
void write_manifest(const RunManifest& m, const std::string& path);
RunManifest read_manifest(const std::string& path);

}  // namespace mixstage::cli
