#include "cdlgrade/color_science.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>

#include "cdlgrade/error.hpp"

namespace cdlgrade::color {

namespace {

// Sony S-Log3. Source: Sony, "Technical Summary for S-Gamut3.Cine/S-Log3 and
// S-Gamut3/S-Log3".
namespace slog3 {
constexpr double kLinCut = 0.01125000;
constexpr double kCodeCut = 171.2102946929;
double decode(double y) {
    if (y >= kCodeCut / 1023.0) return std::pow(10.0, (y * 1023.0 - 420.0) / 261.5) * (0.18 + 0.01) - 0.01;
    return (y * 1023.0 - 95.0) * kLinCut / (kCodeCut - 95.0);
}
double encode(double x) {
    if (x >= kLinCut) return (420.0 + std::log10((x + 0.01) / (0.18 + 0.01)) * 261.5) / 1023.0;
    return (x * (kCodeCut - 95.0) / kLinCut + 95.0) / 1023.0;
}
} // namespace slog3

// RED Log3G10 (IPP2). Source: RED, "White Paper on REDWideGamutRGB and
// Log3G10", version 2 curve with the 0.01 black offset.
namespace log3g10 {
constexpr double a = 0.224282, b = 155.975327, c = 0.01, g = 15.1927;
double decode(double y) {
    if (y < 0.0) return y / g - c;
    return (std::pow(10.0, y / a) - 1.0) / b - c;
}
double encode(double x) {
    const double xo = x + c;
    if (xo < 0.0) return xo * g;
    return a * std::log10(xo * b + 1.0);
}
} // namespace log3g10

// ARRI LogC3 at EI 800. Source: ARRI, "ALEXA Log C Curve - Usage in VFX",
// scene-linear parameter table.
namespace logc3 {
constexpr double cut = 0.010591, a = 5.555556, b = 0.052272, c = 0.247190, d = 0.385537,
                 e = 5.367655, f = 0.092809;
double decode(double t) {
    if (t > e * cut + f) return (std::pow(10.0, (t - d) / c) - b) / a;
    return (t - f) / e;
}
double encode(double x) {
    if (x > cut) return c * std::log10(a * x + b) + d;
    return e * x + f;
}
} // namespace logc3

// Panasonic V-Log. Source: Panasonic, "V-Log/V-Gamut Reference Manual".
namespace vlog {
constexpr double cut1 = 0.01, cut2 = 0.181, b = 0.00873, c = 0.241514, d = 0.598206;
double decode(double y) {
    if (y < cut2) return (y - 0.125) / 5.6;
    return std::pow(10.0, (y - d) / c) - b;
}
double encode(double x) {
    if (x < cut1) return 5.6 * x + 0.125;
    return c * std::log10(x + b) + d;
}
} // namespace vlog

const std::array<LogCurve, 4> kCurves{{
    {LogCurveId::SLog3, "slog3", slog3::decode(1.0)},
    {LogCurveId::Log3G10, "log3g10", log3g10::decode(1.0)},
    {LogCurveId::LogC3, "logc3", logc3::decode(1.0)},
    {LogCurveId::VLog, "vlog", vlog::decode(1.0)},
}};

std::string canonical_name(std::string_view name) {
    std::string out;
    for (char ch : name) {
        if (ch == '-' || ch == '_' || ch == '.' || ch == ' ') continue;
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
    return out;
}

const Eigen::Matrix3d& cat02() {
    static const Eigen::Matrix3d m = (Eigen::Matrix3d() << 0.7328, 0.4296, -0.1624,  //
                                      -0.7036, 1.6975, 0.0061,                      //
                                      0.0030, 0.0136, 0.9834)
                                         .finished();
    return m;
}

std::vector<Chromaticity> build_gamuts() {
    std::vector<Chromaticity> g;
    // Sony S-Gamut3 / S-Gamut3.Cine (Sony technical summary).
    g.push_back(Chromaticity::from_primaries("sgamut3", {0.730, 0.280}, {0.140, 0.855}, {0.100, -0.050}, kD65));
    g.push_back(Chromaticity::from_primaries("sgamut3cine", {0.766, 0.275}, {0.225, 0.800}, {0.089, -0.087}, kD65));
    // REDWideGamutRGB (RED white paper).
    g.push_back(Chromaticity::from_primaries("redwidegamutrgb", {0.780308, 0.304253}, {0.121595, 1.493994},
                                             {0.095612, -0.084589}, kD65));
    // ARRI Wide Gamut 3.
    g.push_back(Chromaticity::from_primaries("awg3", {0.6840, 0.3130}, {0.2210, 0.8480}, {0.0861, -0.1020}, kD65));
    // Panasonic V-Gamut.
    g.push_back(Chromaticity::from_primaries("vgamut", {0.730, 0.280}, {0.165, 0.840}, {0.100, -0.030}, kD65));
    // ITU-R BT.709.
    g.push_back(Chromaticity::from_primaries("rec709", {0.64, 0.33}, {0.30, 0.60}, {0.15, 0.06}, kD65));
    // ACES AP0 (SMPTE ST 2065-1), D60-ish white.
    g.push_back(Chromaticity::from_primaries("acesap0", {0.7347, 0.2653}, {0.0, 1.0}, {0.0001, -0.0770}, kD60));
    // ROMM / ProPhoto RGB, D50 white.
    g.push_back(Chromaticity::from_primaries("prophoto", {0.7347, 0.2653}, {0.1596, 0.8404}, {0.0366, 0.0001}, kD50));
    return g;
}

const std::vector<Chromaticity>& gamut_table() {
    static const std::vector<Chromaticity> table = build_gamuts();
    return table;
}

bool valid_white(Xy w) { return w.x > 0.0 && w.x < 1.0 && w.y > 0.0 && w.y < 1.0; }

} // namespace

double LogCurve::decode(double code) const {
    switch (id) {
    case LogCurveId::SLog3: return slog3::decode(code);
    case LogCurveId::Log3G10: return log3g10::decode(code);
    case LogCurveId::LogC3: return logc3::decode(code);
    case LogCurveId::VLog: return vlog::decode(code);
    }
    return code;
}

double LogCurve::encode(double linear) const {
    switch (id) {
    case LogCurveId::SLog3: return slog3::encode(linear);
    case LogCurveId::Log3G10: return log3g10::encode(linear);
    case LogCurveId::LogC3: return logc3::encode(linear);
    case LogCurveId::VLog: return vlog::encode(linear);
    }
    return linear;
}

const LogCurve& log_curve(LogCurveId id) { return kCurves[static_cast<std::size_t>(id)]; }

LogCurveId parse_log_curve(std::string_view name) {
    const std::string key = canonical_name(name);
    for (const auto& c : kCurves) {
        if (key == c.name) return c.id;
    }
    if (key == "logc" || key == "arrilogc3" || key == "logcv3") return LogCurveId::LogC3;
    if (key == "redlog3g10") return LogCurveId::Log3G10;
    if (key == "slog3cine") return LogCurveId::SLog3;
    fail(ErrorCode::InvalidInput, "unknown log curve '" + std::string(name) +
                                      "' (supported: slog3, log3g10, logc3, vlog)");
}

Eigen::Vector3d xy_to_xyz(Xy w) { return {w.x / w.y, 1.0, (1.0 - w.x - w.y) / w.y}; }

Chromaticity Chromaticity::from_primaries(std::string name, Xy red, Xy green, Xy blue, Xy white) {
    if (!valid_white(white)) fail(ErrorCode::Config, "white point of '" + name + "' outside (0,1)^2");
    Eigen::Matrix3d p;
    const std::array<Xy, 3> prim{red, green, blue};
    for (int i = 0; i < 3; ++i) {
        if (prim[i].y == 0.0) fail(ErrorCode::Config, "primary with y == 0 in '" + name + "'");
        p.col(i) = xy_to_xyz(prim[i]);
    }
    if (std::abs(p.determinant()) < 1e-12) {
        fail(ErrorCode::Config, "primaries matrix of '" + name + "' is not invertible");
    }
    const Eigen::Vector3d s = p.partialPivLu().solve(xy_to_xyz(white));
    Chromaticity c;
    c.name = std::move(name);
    c.to_xyz = p * s.asDiagonal();
    c.white = white;
    return c;
}

const Chromaticity& gamut(std::string_view name) {
    const std::string key = canonical_name(name);
    for (const auto& g : gamut_table()) {
        if (g.name == key) return g;
    }
    if (key == "rwg" || key == "redwidegamut") return gamut("redwidegamutrgb");
    if (key == "arriwidegamut3" || key == "alexawidegamut") return gamut("awg3");
    if (key == "ap0" || key == "aces2065") return gamut("acesap0");
    if (key == "bt709" || key == "srgb") return gamut("rec709");
    fail(ErrorCode::InvalidInput, "unknown gamut '" + std::string(name) + "'");
}

std::vector<std::string> gamut_names() {
    std::vector<std::string> names;
    for (const auto& g : gamut_table()) names.push_back(g.name);
    return names;
}

Eigen::Matrix3d cat02_matrix(Xy src_white, Xy dst_white) {
    if (!valid_white(src_white) || !valid_white(dst_white)) {
        fail(ErrorCode::DegenerateWhitepoint, "white point chromaticity outside (0,1)^2");
    }
    const Eigen::Vector3d src_lms = cat02() * xy_to_xyz(src_white);
    const Eigen::Vector3d dst_lms = cat02() * xy_to_xyz(dst_white);
    for (int i = 0; i < 3; ++i) {
        if (src_lms[i] == 0.0) fail(ErrorCode::DegenerateWhitepoint, "source white has a zero CAT02 cone response");
    }
    const Eigen::Vector3d scale = dst_lms.cwiseQuotient(src_lms);
    return cat02().inverse() * scale.asDiagonal() * cat02();
}

Eigen::Vector3d cat02_adapt(const Eigen::Vector3d& xyz, Xy src_white, Xy dst_white) {
    if (src_white.x == dst_white.x && src_white.y == dst_white.y) {
        // Validate anyway so degenerate inputs fail consistently.
        (void)cat02_matrix(src_white, dst_white);
        return xyz;
    }
    return cat02_matrix(src_white, dst_white) * xyz;
}

double rec709_oetf(double l) {
    if (l < 0.018) return 4.5 * l;
    return 1.099 * std::pow(l, 0.45) - 0.099;
}

double rec709_oetf_inverse(double v) {
    if (v < 4.5 * 0.018) return v / 4.5;
    return std::pow((v + 0.099) / 1.099, 1.0 / 0.45);
}

Eigen::Matrix3d gamut_to_rec709_matrix(const Chromaticity& src) {
    const Chromaticity& r709 = gamut("rec709");
    Eigen::Matrix3d adapt = Eigen::Matrix3d::Identity();
    if (src.white.x != kD65.x || src.white.y != kD65.y) adapt = cat02_matrix(src.white, kD65);
    return r709.to_xyz.inverse() * adapt * src.to_xyz;
}

Rgb cst_pixel(const Rgb& linear, const Eigen::Matrix3d& m) {
    const Eigen::Vector3d v = m * Eigen::Vector3d(linear[0], linear[1], linear[2]);
    Rgb out{};
    for (int i = 0; i < 3; ++i) out[i] = std::clamp(rec709_oetf(std::max(0.0, v[i])), 0.0, 1.0);
    return out;
}

Frame decode_log(const Frame& frame, LogCurveId curve) {
    if (frame.colorimetry.encoding != Encoding::CameraLog || frame.colorimetry.curve != curve) {
        fail(ErrorCode::InvalidInput, "decode_log expects camera-log(" + std::string(log_curve(curve).name) +
                                          ") input, got " + describe(frame.colorimetry));
    }
    const LogCurve& c = log_curve(curve);
    Frame out(frame.width, frame.height, Colorimetry::scene_linear(frame.colorimetry.gamut));
    for (std::size_t i = 0; i < frame.pixels.size(); ++i) {
        for (int ch = 0; ch < 3; ++ch) {
            const double v = c.decode(frame.pixels[i][ch]);
            if (!std::isfinite(v)) fail(ErrorCode::Internal, "log decode produced a non-finite value");
            out.pixels[i][ch] = v;
        }
    }
    return out;
}

Frame cst_to_rec709(const Frame& frame, const Chromaticity& src) {
    if (frame.colorimetry.encoding != Encoding::SceneLinear) {
        fail(ErrorCode::InvalidInput, "cst_to_rec709 expects scene-linear input, got " + describe(frame.colorimetry));
    }
    if (!frame.colorimetry.gamut.empty() && gamut(frame.colorimetry.gamut).name != src.name) {
        fail(ErrorCode::InvalidInput, "frame gamut '" + frame.colorimetry.gamut + "' does not match '" + src.name + "'");
    }
    const Eigen::Matrix3d m = gamut_to_rec709_matrix(src);
    Frame out(frame.width, frame.height, Colorimetry::rec709_display());
    for (std::size_t i = 0; i < frame.pixels.size(); ++i) out.pixels[i] = cst_pixel(frame.pixels[i], m);
    return out;
}

Frame normalize(const Frame& log_frame, LogCurveId curve, const Chromaticity& src) {
    return cst_to_rec709(decode_log(log_frame, curve), src);
}

namespace {
constexpr std::size_t kOetfSegments = 1 << 16;
constexpr auto kOetfBreakCell = static_cast<std::size_t>(0.018 * kOetfSegments);
} // namespace

CodeNormalizer::CodeNormalizer(LogCurveId curve, const Chromaticity& src, std::uint32_t max_code)
    : decode_(static_cast<std::size_t>(max_code) + 1), oetf_(kOetfSegments + 1),
      matrix_(gamut_to_rec709_matrix(src)) {
    if (max_code == 0) fail(ErrorCode::InvalidInput, "max code value must be positive");
    const LogCurve& c = log_curve(curve);
    for (std::uint32_t k = 0; k <= max_code; ++k) decode_[k] = c.decode(static_cast<double>(k) / max_code);
    for (std::size_t k = 0; k <= kOetfSegments; ++k) {
        oetf_[k] = rec709_oetf(static_cast<double>(k) / kOetfSegments);
    }
}

double CodeNormalizer::oetf_clamped(double linear) const {
    if (!(linear > 0.0)) return 0.0;
    if (linear >= 1.0) return 1.0;
    const double pos = linear * kOetfSegments;
    const auto i = static_cast<std::size_t>(pos);
    if (i == kOetfBreakCell) return rec709_oetf(linear); // the curve jumps inside this cell
    const double t = pos - static_cast<double>(i);
    return oetf_[i] + (oetf_[i + 1] - oetf_[i]) * t;
}

Rgb CodeNormalizer::operator()(std::uint32_t r, std::uint32_t g, std::uint32_t b) const {
    const double lr = decode_[r], lg = decode_[g], lb = decode_[b];
    const auto& m = matrix_;
    return {oetf_clamped(m(0, 0) * lr + m(0, 1) * lg + m(0, 2) * lb),
            oetf_clamped(m(1, 0) * lr + m(1, 1) * lg + m(1, 2) * lb),
            oetf_clamped(m(2, 0) * lr + m(2, 1) * lg + m(2, 2) * lb)};
}

} // namespace cdlgrade::color
