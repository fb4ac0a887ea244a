#include "settings.hpp"

#include "mixstage/binio.hpp"
#include "mixstage/error.hpp"

#include <utility>

namespace mixstage::cli {

Settings::Settings(nlohmann::json file) : file_(std::move(file)) {
    if (!file_.is_object()) throw InvalidArgument("configuration must be a JSON object");
}

Settings Settings::from_file(const std::string& path) {
    const std::string text = binio::read_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(path, e.byte, e.what());
    }
    if (!j.is_object()) throw FormatError(path, 0, "configuration must be a JSON object");
    return Settings(std::move(j));
}

void Settings::reject_unknown() const {
    for (const auto& [key, value] : file_.items())
        if (!used_.count(key)) throw InvalidArgument("unknown configuration key '" + key + "'");
}

}  // namespace mixstage::cli
