#pragma once

#include "json.hpp"

#include "cdlgrade/cdl.hpp"

namespace cdlgrade::cdl {

// Flat object keyed by canonical field path: {"lift.red": 0, ...}.
nlohmann::json to_json(const CdlParams& p);

// Requires every field (aliases accepted); throws InvalidInput otherwise.
// Values are not range-checked here.
CdlParams params_from_json(const nlohmann::json& j);

} // namespace cdlgrade::cdl
