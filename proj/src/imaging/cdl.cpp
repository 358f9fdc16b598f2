#include "cdlgrade/cdl.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "cdlgrade/error.hpp"

namespace cdlgrade::cdl {

namespace {

constexpr std::array<std::string_view, 3> kChannels{"red", "green", "blue"};

const FieldRange kLiftRange{-0.5, true, 0.5, true};
const FieldRange kGammaRange{0.2, false, 5.0, true};
const FieldRange kGainRange{0.0, false, 4.0, true};
const FieldRange kSatRange{0.0, true, 4.0, true};
const FieldRange kContrastRange{0.25, true, 4.0, true};
const FieldRange kPivotRange{0.0, false, 1.0, false};

struct FieldRef {
    std::string_view group;
    int channel; // -1 for scalars
};

std::optional<FieldRef> resolve(std::string_view path) {
    const auto dot = path.find('.');
    std::string_view group = path.substr(0, dot);
    if (dot == std::string_view::npos) {
        if (group == "saturation" || group == "sat") return FieldRef{"saturation", -1};
        if (group == "contrast") return FieldRef{"contrast", -1};
        if (group == "pivot") return FieldRef{"pivot", -1};
        return std::nullopt;
    }
    if (group == "offset") group = "lift";
    if (group == "slope") group = "gain";
    if (group != "lift" && group != "gamma" && group != "gain") return std::nullopt;
    const std::string_view ch = path.substr(dot + 1);
    int index = -1;
    if (ch == "red" || ch == "r") index = 0;
    if (ch == "green" || ch == "g") index = 1;
    if (ch == "blue" || ch == "b") index = 2;
    if (index < 0) return std::nullopt;
    return FieldRef{group, index};
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

} // namespace

bool FieldRange::contains(double v) const {
    if (!std::isfinite(v)) return false;
    const bool above = low_inclusive ? v >= low : v > low;
    const bool below = high_inclusive ? v <= high : v < high;
    return above && below;
}

std::string FieldRange::describe() const {
    return std::string(low_inclusive ? "[" : "(") + format_double(low) + ", " + format_double(high) +
           (high_inclusive ? "]" : ")");
}

const std::vector<std::string>& field_paths() {
    static const std::vector<std::string> paths = [] {
        std::vector<std::string> p;
        for (std::string_view g : {"lift", "gamma", "gain"}) {
            for (auto ch : kChannels) p.push_back(std::string(g) + "." + std::string(ch));
        }
        p.push_back("saturation");
        p.push_back("contrast");
        p.push_back("pivot");
        return p;
    }();
    return paths;
}

std::optional<std::string> canonical_field(std::string_view path) {
    const auto ref = resolve(path);
    if (!ref) return std::nullopt;
    if (ref->channel < 0) return std::string(ref->group);
    return std::string(ref->group) + "." + std::string(kChannels[ref->channel]);
}

double get_field(const CdlParams& p, std::string_view path) {
    const auto ref = resolve(path);
    if (!ref) fail(ErrorCode::InvalidInput, "unknown parameter field '" + std::string(path) + "'");
    if (ref->group == "lift") return p.lift[ref->channel];
    if (ref->group == "gamma") return p.gamma[ref->channel];
    if (ref->group == "gain") return p.gain[ref->channel];
    if (ref->group == "saturation") return p.saturation;
    if (ref->group == "contrast") return p.contrast;
    return p.pivot;
}

void set_field(CdlParams& p, std::string_view path, double value) {
    const auto ref = resolve(path);
    if (!ref) fail(ErrorCode::InvalidInput, "unknown parameter field '" + std::string(path) + "'");
    if (ref->group == "lift") p.lift[ref->channel] = value;
    else if (ref->group == "gamma") p.gamma[ref->channel] = value;
    else if (ref->group == "gain") p.gain[ref->channel] = value;
    else if (ref->group == "saturation") p.saturation = value;
    else if (ref->group == "contrast") p.contrast = value;
    else p.pivot = value;
}

FieldRange field_range(std::string_view path) {
    const auto ref = resolve(path);
    if (!ref) fail(ErrorCode::InvalidInput, "unknown parameter field '" + std::string(path) + "'");
    if (ref->group == "lift") return kLiftRange;
    if (ref->group == "gamma") return kGammaRange;
    if (ref->group == "gain") return kGainRange;
    if (ref->group == "saturation") return kSatRange;
    if (ref->group == "contrast") return kContrastRange;
    return kPivotRange;
}

std::vector<Violation> validate_params(const CdlParams& p) {
    std::vector<Violation> out;
    for (const auto& path : field_paths()) {
        const double v = get_field(p, path);
        const FieldRange r = field_range(path);
        if (!r.contains(v)) out.push_back({path, v, r.describe()});
    }
    return out;
}

void require_valid(const CdlParams& p) {
    const auto violations = validate_params(p);
    if (violations.empty()) return;
    std::ostringstream msg;
    msg << "invalid grading parameters:";
    for (const auto& v : violations) msg << ' ' << v.field << '=' << format_double(v.value) << " not in " << v.bounds << ';';
    fail(ErrorCode::Validation, msg.str());
}

std::string canonical_serialize(const CdlParams& p) {
    std::string out;
    for (const auto& path : field_paths()) {
        out += path;
        out += ' ';
        out += format_double(get_field(p, path));
        out += '\n';
    }
    return out;
}

Rgb adaptive_lift(const Rgb& x, const Rgb& lift) {
    return {x[0] + lift[0] * (1.0 - x[0]), x[1] + lift[1] * (1.0 - x[1]), x[2] + lift[2] * (1.0 - x[2])};
}

double highlight_rolloff(double x, const RolloffConfig& cfg) {
    if (x <= cfg.tau) return x;
    const double span = 1.0 - cfg.tau;
    // -expm1(-t) == 1 - exp(-t) without cancellation near the knee.
    const double y = cfg.tau + span * -std::expm1(-(x - cfg.tau) / span);
    // The shoulder never reaches 1; round down instead of to nearest.
    return y < 1.0 ? y : std::nextafter(1.0, 0.0);
}

Rgb apply_cdl_unchecked(const Rgb& rgb, const CdlParams& p, const RolloffConfig& rolloff, LiftMode lift_mode) {
    Rgb v;
    for (int c = 0; c < 3; ++c) v[c] = clamp01(rgb[c] * p.gain[c]);

    if (lift_mode == LiftMode::Adaptive) {
        v = adaptive_lift(v, p.lift);
    } else {
        for (int c = 0; c < 3; ++c) v[c] += p.lift[c];
    }
    for (int c = 0; c < 3; ++c) v[c] = clamp01(v[c]);

    for (int c = 0; c < 3; ++c) {
        if (v[c] > 0.0 && p.gamma[c] != 1.0) v[c] = std::pow(v[c], 1.0 / p.gamma[c]);
    }

    if (p.contrast != 1.0) {
        for (int c = 0; c < 3; ++c) v[c] = (v[c] - p.pivot) * p.contrast + p.pivot;
    }

    if (p.saturation != 1.0) {
        const double luma = kRec709Luma[0] * v[0] + kRec709Luma[1] * v[1] + kRec709Luma[2] * v[2];
        for (int c = 0; c < 3; ++c) v[c] = luma + p.saturation * (v[c] - luma);
    }

    if (rolloff.enabled) {
        for (int c = 0; c < 3; ++c) v[c] = highlight_rolloff(v[c], rolloff);
    }
    for (int c = 0; c < 3; ++c) v[c] = clamp01(v[c]);
    return v;
}

Rgb apply_cdl(const Rgb& rgb, const CdlParams& params, const RolloffConfig& rolloff, LiftMode lift_mode) {
    require_valid(params);
    return apply_cdl_unchecked(rgb, params, rolloff, lift_mode);
}

} // namespace cdlgrade::cdl
