#include "cdlgrade/frame_stats.hpp"

#include <algorithm>
#include <cmath>

#include "cdlgrade/cdl.hpp"
#include "cdlgrade/error.hpp"

namespace cdlgrade::stats {

bool HueRange::contains(double hue) const {
    if (low_deg <= high_deg) return hue >= low_deg && hue <= high_deg;
    return hue >= low_deg || hue <= high_deg;
}

void validate(const HueRange& r) {
    if (r.name.empty()) fail(ErrorCode::InvalidInput, "hue range needs a name");
    for (double v : {r.low_deg, r.high_deg}) {
        if (!(v >= 0.0 && v < 360.0)) fail(ErrorCode::InvalidInput, "hue bound of '" + r.name + "' outside [0,360)");
    }
}

double rec709_luma(const Rgb& rgb) {
    return cdl::kRec709Luma[0] * rgb[0] + cdl::kRec709Luma[1] * rgb[1] + cdl::kRec709Luma[2] * rgb[2];
}

double nearest_rank(const std::vector<double>& sorted, double percentile) {
    if (sorted.empty()) fail(ErrorCode::InsufficientData, "percentile of an empty set");
    const auto n = static_cast<double>(sorted.size());
    auto rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * n));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    return sorted[rank - 1];
}

ExposureProfile exposure_profile(const Frame& frame) {
    if (frame.colorimetry.encoding != Encoding::Rec709Display) {
        fail(ErrorCode::InvalidInput, "exposure profile needs a display-referred frame, got " + describe(frame.colorimetry));
    }
    if (frame.pixel_count() < kMinExposurePixels) {
        fail(ErrorCode::InsufficientData, "exposure profile needs at least " + std::to_string(kMinExposurePixels) + " pixels, got " +
                                              std::to_string(frame.pixel_count()));
    }
    std::vector<double> ire;
    ire.reserve(frame.pixel_count());
    for (const auto& p : frame.pixels) ire.push_back(100.0 * rec709_luma(p));
    std::sort(ire.begin(), ire.end());
    return {nearest_rank(ire, 1.0), nearest_rank(ire, 50.0), nearest_rank(ire, 99.0)};
}

HueSat hsv_hue_sat(const Rgb& rgb) {
    const double mx = std::max({rgb[0], rgb[1], rgb[2]});
    const double mn = std::min({rgb[0], rgb[1], rgb[2]});
    const double d = mx - mn;
    if (mx <= 0.0 || d <= 0.0) return {0.0, 0.0};
    double h;
    if (mx == rgb[0]) h = std::fmod((rgb[1] - rgb[2]) / d, 6.0);
    else if (mx == rgb[1]) h = (rgb[2] - rgb[0]) / d + 2.0;
    else h = (rgb[0] - rgb[1]) / d + 4.0;
    h *= 60.0;
    if (h < 0.0) h += 360.0;
    if (h >= 360.0) h -= 360.0;
    return {h, d / mx};
}

double circular_hue_distance(double a, double b) {
    double d = std::fmod(std::abs(a - b), 360.0);
    return d > 180.0 ? 360.0 - d : d;
}

ProtectedToneReport protected_tone_shift(const Frame& before, const Frame& after, const std::vector<HueRange>& ranges,
                                         double hueless_floor) {
    if (before.width != after.width || before.height != after.height || before.pixel_count() != after.pixel_count()) {
        fail(ErrorCode::InvalidInput, "protected-tone audit needs equal frame dimensions");
    }
    for (const auto& r : ranges) validate(r);

    struct Acc {
        std::size_t n = 0;
        double sum_shift = 0.0, max_shift = 0.0, sum_ratio = 0.0;
    };
    std::vector<Acc> acc(ranges.size());
    for (std::size_t i = 0; i < before.pixel_count(); ++i) {
        const HueSat hb = hsv_hue_sat(before.pixels[i]);
        if (hb.saturation < hueless_floor) continue;
        const HueSat ha = hsv_hue_sat(after.pixels[i]);
        const bool after_hueless = ha.saturation <= 0.0;
        const double shift = after_hueless ? 0.0 : circular_hue_distance(hb.hue_deg, ha.hue_deg);
        const double ratio = ha.saturation / hb.saturation;
        for (std::size_t r = 0; r < ranges.size(); ++r) {
            if (!ranges[r].contains(hb.hue_deg)) continue;
            Acc& a = acc[r];
            ++a.n;
            a.sum_shift += shift;
            a.max_shift = std::max(a.max_shift, shift);
            a.sum_ratio += ratio;
        }
    }
    ProtectedToneReport report;
    for (std::size_t r = 0; r < ranges.size(); ++r) {
        ToneShift t;
        t.name = ranges[r].name;
        t.pixel_count = acc[r].n;
        t.empty = acc[r].n == 0;
        if (!t.empty) {
            t.mean_abs_hue_shift_deg = acc[r].sum_shift / static_cast<double>(acc[r].n);
            t.max_abs_hue_shift_deg = acc[r].max_shift;
            t.mean_saturation_ratio = acc[r].sum_ratio / static_cast<double>(acc[r].n);
        }
        report.ranges.push_back(t);
    }
    return report;
}

nlohmann::json to_json(const ExposureProfile& p) {
    return {{"black_point_ire", p.black_point_ire}, {"mid_gray_ire", p.mid_gray_ire}, {"white_point_ire", p.white_point_ire}};
}

ExposureProfile exposure_from_json(const nlohmann::json& j) {
    return {j.at("black_point_ire").get<double>(), j.at("mid_gray_ire").get<double>(), j.at("white_point_ire").get<double>()};
}

nlohmann::json to_json(const HueRange& r) { return {{"name", r.name}, {"low_deg", r.low_deg}, {"high_deg", r.high_deg}}; }

nlohmann::json to_json(const ProtectedToneReport& r) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : r.ranges) {
        arr.push_back({{"name", t.name},
                       {"pixel_count", t.pixel_count},
                       {"mean_abs_hue_shift_deg", t.mean_abs_hue_shift_deg},
                       {"max_abs_hue_shift_deg", t.max_abs_hue_shift_deg},
                       {"mean_saturation_ratio", t.mean_saturation_ratio},
                       {"empty", t.empty}});
    }
    return {{"protected_tones", arr}};
}

} // namespace cdlgrade::stats
