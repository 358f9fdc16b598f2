#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace cdlgrade {

using Rgb = std::array<double, 3>;

enum class LogCurveId { SLog3, Log3G10, LogC3, VLog };

enum class Encoding { CameraLog, SceneLinear, Rec709Display };

// What a frame's pixel values mean. `curve` is set only for camera-log frames;
// `gamut` names the RGB primaries (empty for display-referred Rec.709).
struct Colorimetry {
    Encoding encoding = Encoding::Rec709Display;
    std::optional<LogCurveId> curve;
    std::string gamut;

    static Colorimetry camera_log(LogCurveId curve, std::string gamut) {
        return {Encoding::CameraLog, curve, std::move(gamut)};
    }
    static Colorimetry scene_linear(std::string gamut) {
        return {Encoding::SceneLinear, std::nullopt, std::move(gamut)};
    }
    static Colorimetry rec709_display() { return {}; }

    bool operator==(const Colorimetry&) const = default;
};

std::string describe(const Colorimetry& c);

// Row-major RGB raster.
struct Frame {
    int width = 0;
    int height = 0;
    std::vector<Rgb> pixels;
    Colorimetry colorimetry;

    Frame() = default;
    Frame(int w, int h, Colorimetry c)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h)),
          colorimetry(std::move(c)) {}

    std::size_t pixel_count() const { return pixels.size(); }
    Rgb& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    const Rgb& at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

// Throws InvalidInput when the dimensions disagree with the pixel count, a
// channel is NaN/Inf, or a display-referred frame leaves [0,1].
void validate_frame(const Frame& frame);

// Box-filter downscale so that max(width, height) <= long_edge. Frames that
// already fit are returned unchanged.
Frame downscale_to_long_edge(const Frame& frame, int long_edge);

} // namespace cdlgrade
