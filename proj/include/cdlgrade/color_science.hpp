#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "cdlgrade/frame.hpp"

namespace cdlgrade::color {

struct Xy {
    double x = 0.0;
    double y = 0.0;
};

inline constexpr Xy kD65{0.3127, 0.3290};
inline constexpr Xy kD60{0.32168, 0.33767};
inline constexpr Xy kD50{0.3457, 0.3585};

struct LogCurve {
    LogCurveId id;
    std::string_view name;
    // Linear value produced by code value 1.0.
    double clip_linear;

    double decode(double code) const;
    double encode(double linear) const;
};

const LogCurve& log_curve(LogCurveId id);

// Accepts "slog3", "log3g10", "logc3", "vlog" (case-insensitive, '-'/'_'
// ignored). Anything else is rejected with InvalidInput.
LogCurveId parse_log_curve(std::string_view name);

// Gamut RGB -> CIE XYZ (Y of white == 1) together with its white point.
struct Chromaticity {
    std::string name;
    Eigen::Matrix3d to_xyz = Eigen::Matrix3d::Identity();
    Xy white;

    // Builds the normalized primaries matrix. Throws Config when the
    // primaries are collinear or the white point is not in (0,1)^2.
    static Chromaticity from_primaries(std::string name, Xy red, Xy green, Xy blue, Xy white);
};

// Known gamuts: sgamut3, sgamut3cine, redwidegamutrgb, awg3, vgamut, rec709,
// aces_ap0, prophoto. Unknown names throw InvalidInput.
const Chromaticity& gamut(std::string_view name);
std::vector<std::string> gamut_names();

Eigen::Vector3d xy_to_xyz(Xy white);

// CAT02 von Kries adaptation of an XYZ triple between two white points.
Eigen::Vector3d cat02_adapt(const Eigen::Vector3d& xyz, Xy src_white, Xy dst_white);

// Matrix form of cat02_adapt.
Eigen::Matrix3d cat02_matrix(Xy src_white, Xy dst_white);

double rec709_oetf(double linear);
double rec709_oetf_inverse(double encoded);

// Decode a camera-log frame to scene-linear in the same gamut.
Frame decode_log(const Frame& frame, LogCurveId curve);

// Scene-linear (any supported gamut) -> display-encoded Rec.709:
// gamut -> XYZ -> CAT02 to D65 -> Rec.709 primaries -> clip negatives ->
// Rec.709 OETF -> clamp to [0,1].
Frame cst_to_rec709(const Frame& frame, const Chromaticity& src);
Rgb cst_pixel(const Rgb& linear, const Eigen::Matrix3d& to_rec709_linear);

// Single 3x3 taking linear gamut RGB to linear Rec.709 RGB (includes CAT02).
Eigen::Matrix3d gamut_to_rec709_matrix(const Chromaticity& src);

// decode_log followed by cst_to_rec709.
Frame normalize(const Frame& log_frame, LogCurveId curve, const Chromaticity& src);

// Table-driven normalization for integer-coded sources (render path). The
// decode table is exact for every code value; the OETF table uses linear
// interpolation and stays within 1e-6 of rec709_oetf.
class CodeNormalizer {
public:
    CodeNormalizer(LogCurveId curve, const Chromaticity& src, std::uint32_t max_code);

    Rgb operator()(std::uint32_t r, std::uint32_t g, std::uint32_t b) const;

private:
    double oetf_clamped(double linear) const;

    std::vector<double> decode_;
    std::vector<double> oetf_;
    Eigen::Matrix3d matrix_;
};

} // namespace cdlgrade::color
