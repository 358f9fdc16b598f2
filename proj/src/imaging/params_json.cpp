#include "cdlgrade/params_json.hpp"

#include <set>

#include "cdlgrade/error.hpp"

namespace cdlgrade::cdl {

nlohmann::json to_json(const CdlParams& p) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& path : field_paths()) j[path] = get_field(p, path);
    return j;
}

CdlParams params_from_json(const nlohmann::json& j) {
    if (!j.is_object()) fail(ErrorCode::InvalidInput, "params must be a JSON object");
    CdlParams p;
    std::set<std::string> seen;
    for (const auto& [key, value] : j.items()) {
        const auto path = canonical_field(key);
        if (!path) fail(ErrorCode::InvalidInput, "unknown parameter '" + key + "'");
        if (!value.is_number()) fail(ErrorCode::InvalidInput, "parameter '" + key + "' is not a number");
        if (!seen.insert(*path).second) fail(ErrorCode::InvalidInput, "parameter '" + *path + "' given twice");
        set_field(p, *path, value.get<double>());
    }
    for (const auto& path : field_paths()) {
        if (!seen.count(path)) fail(ErrorCode::InvalidInput, "missing parameter '" + path + "'");
    }
    return p;
}

} // namespace cdlgrade::cdl
