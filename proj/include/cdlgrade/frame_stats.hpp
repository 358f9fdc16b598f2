#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"

#include "cdlgrade/frame.hpp"

namespace cdlgrade::stats {

struct ExposureProfile {
    double black_point_ire = 0.0; // 1st percentile
    double mid_gray_ire = 0.0;    // 50th
    double white_point_ire = 0.0; // 99th

    bool operator==(const ExposureProfile&) const = default;
};

// Hue interval in degrees; wraps through 0 when low > high.
struct HueRange {
    std::string name;
    double low_deg = 0.0;
    double high_deg = 0.0;

    bool contains(double hue_deg) const;
    bool operator==(const HueRange&) const = default;
};

// Throws InvalidInput for an empty name or bounds outside [0,360).
void validate(const HueRange& range);

struct ToneShift {
    std::string name;
    std::size_t pixel_count = 0;
    double mean_abs_hue_shift_deg = 0.0;
    double max_abs_hue_shift_deg = 0.0;
    double mean_saturation_ratio = 1.0;
    bool empty = true;
};

struct ProtectedToneReport {
    std::vector<ToneShift> ranges;
};

inline constexpr std::size_t kMinExposurePixels = 100;
inline constexpr double kDefaultHuelessSaturation = 0.05;

double rec709_luma(const Rgb& rgb);

// Nearest-rank percentile (rank = ceil(p/100 * N)) of sorted values.
double nearest_rank(const std::vector<double>& sorted, double percentile);

// 1st/50th/99th percentiles of 100 * Rec.709 luma. Requires a display-referred
// frame with at least kMinExposurePixels pixels (InsufficientData otherwise).
ExposureProfile exposure_profile(const Frame& frame);

// HSV hue in degrees [0,360) and saturation (max-min)/max; hue is 0 for
// achromatic pixels.
struct HueSat {
    double hue_deg;
    double saturation;
};
HueSat hsv_hue_sat(const Rgb& rgb);

// Shortest angular distance, in [0,180].
double circular_hue_distance(double a_deg, double b_deg);

// Pixels are selected by membership of the BEFORE frame's hue in each range;
// pixels with HSV saturation below `hueless_floor` are skipped. A pixel that
// becomes achromatic after grading contributes a 0 hue shift and a 0
// saturation ratio.
ProtectedToneReport protected_tone_shift(const Frame& before, const Frame& after, const std::vector<HueRange>& ranges,
                                         double hueless_floor = kDefaultHuelessSaturation);

nlohmann::json to_json(const ExposureProfile& p);
ExposureProfile exposure_from_json(const nlohmann::json& j);
nlohmann::json to_json(const HueRange& r);
nlohmann::json to_json(const ProtectedToneReport& r);

} // namespace cdlgrade::stats
