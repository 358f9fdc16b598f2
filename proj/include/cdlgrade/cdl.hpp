#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cdlgrade/frame.hpp"

namespace cdlgrade::cdl {

// The grading decision: primary wheels per channel plus global
// saturation / contrast / pivot.
struct CdlParams {
    Rgb lift{0.0, 0.0, 0.0};
    Rgb gamma{1.0, 1.0, 1.0};
    Rgb gain{1.0, 1.0, 1.0};
    double saturation = 1.0;
    double contrast = 1.0;
    double pivot = 0.435;

    static CdlParams identity() { return {}; }
    bool operator==(const CdlParams&) const = default;
};

struct RolloffConfig {
    double tau = 0.8;
    bool enabled = true;
};

enum class LiftMode {
    Adaptive, // x + l * (1 - x)
    Offset,   // x + l (plain ASC offset; ablation only)
};

// Inclusive/exclusive bounds of one scalar field.
struct FieldRange {
    double low;
    bool low_inclusive;
    double high;
    bool high_inclusive;

    bool contains(double v) const;
    std::string describe() const;
};

struct Violation {
    std::string field; // e.g. "gamma.red"
    double value;
    std::string bounds;
};

// Every scalar of CdlParams has a canonical dotted path: lift.red ... pivot.
// The order here is the canonical serialization order.
const std::vector<std::string>& field_paths();

// Accepts canonical paths plus short aliases (lift.r, lift.b, sat, ...).
// Returns the canonical path or nullopt.
std::optional<std::string> canonical_field(std::string_view path);

double get_field(const CdlParams& p, std::string_view path);
void set_field(CdlParams& p, std::string_view path, double value);
FieldRange field_range(std::string_view path);

std::vector<Violation> validate_params(const CdlParams& p);

// Throws Validation listing every violation when p is out of range.
void require_valid(const CdlParams& p);

// One "path value" line per field, values in shortest round-trip form.
std::string canonical_serialize(const CdlParams& p);

Rgb adaptive_lift(const Rgb& x_gain, const Rgb& lift);
double highlight_rolloff(double x, const RolloffConfig& cfg);

// gain -> clamp -> lift -> clamp -> gamma -> contrast about pivot ->
// saturation (Rec.709 luma) -> shoulder roll-off -> clamp. Throws
// Validation for invalid params.
Rgb apply_cdl(const Rgb& rgb, const CdlParams& params, const RolloffConfig& rolloff,
              LiftMode lift_mode = LiftMode::Adaptive);

// Same pipeline without re-validating; callers must have validated.
Rgb apply_cdl_unchecked(const Rgb& rgb, const CdlParams& params, const RolloffConfig& rolloff,
                        LiftMode lift_mode = LiftMode::Adaptive);

inline constexpr std::array<double, 3> kRec709Luma{0.2126, 0.7152, 0.0722};

} // namespace cdlgrade::cdl
