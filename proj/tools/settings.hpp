#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <set>
#include <string>

namespace mixstage::cli {

/// Layered configuration: CLI flag, then config file, then built-in default.
/// Every lookup records the value chosen and where it came from.
class Settings {
public:
    Settings() = default;
    explicit Settings(nlohmann::json file);

    /// Parses a JSON object from disk; FormatError when unreadable or not an object.
    static Settings from_file(const std::string& path);

    template <typename T>
    T get(const std::string& key, const T& fallback, const std::optional<T>& flag = std::nullopt) {
        used_.insert(key);
        T value = fallback;
        const char* source = "default";
        if (flag) {
            value = *flag;
            source = "cli";
        } else if (file_.contains(key)) {
            value = file_.at(key).get<T>();
            source = "config";
        }
        resolved_[key] = value;
        sources_[key] = source;
        return value;
    }

    /// InvalidArgument naming the first config key no lookup consumed.
    void reject_unknown() const;

    const nlohmann::json& resolved() const { return resolved_; }
    const nlohmann::json& sources() const { return sources_; }

private:
    nlohmann::json file_ = nlohmann::json::object();
    nlohmann::json resolved_ = nlohmann::json::object();
    nlohmann::json sources_ = nlohmann::json::object();
    std::set<std::string> used_;
};

}  // namespace mixstage::cli
