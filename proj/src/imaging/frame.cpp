#include "cdlgrade/frame.hpp"

#include <algorithm>
#include <cmath>

#include "cdlgrade/color_science.hpp"
#include "cdlgrade/error.hpp"

namespace cdlgrade {

std::string describe(const Colorimetry& c) {
    switch (c.encoding) {
    case Encoding::CameraLog:
        return "camera-log(" + std::string(c.curve ? color::log_curve(*c.curve).name : "?") + ", " +
               c.gamut + ")";
    case Encoding::SceneLinear:
        return "scene-linear(" + c.gamut + ")";
    case Encoding::Rec709Display:
        return "rec709-display";
    }
    return "unknown";
}

void validate_frame(const Frame& frame) {
    if (frame.width < 0 || frame.height < 0 ||
        frame.pixels.size() != static_cast<std::size_t>(frame.width) * frame.height) {
        fail(ErrorCode::InvalidInput, "frame pixel count does not match " +
                                          std::to_string(frame.width) + "x" +
                                          std::to_string(frame.height));
    }
    const bool display = frame.colorimetry.encoding == Encoding::Rec709Display;
    for (std::size_t i = 0; i < frame.pixels.size(); ++i) {
        for (double v : frame.pixels[i]) {
            if (!std::isfinite(v)) {
                fail(ErrorCode::InvalidInput, "non-finite channel at pixel " + std::to_string(i));
            }
            if (display && (v < 0.0 || v > 1.0)) {
                fail(ErrorCode::InvalidInput,
                     "display-referred channel outside [0,1] at pixel " + std::to_string(i));
            }
        }
    }
}

Frame downscale_to_long_edge(const Frame& frame, int long_edge) {
    const int longest = std::max(frame.width, frame.height);
    if (long_edge <= 0 || longest <= long_edge) return frame;

    const double scale = static_cast<double>(long_edge) / longest;
    const int w = std::max(1, static_cast<int>(std::lround(frame.width * scale)));
    const int h = std::max(1, static_cast<int>(std::lround(frame.height * scale)));
    Frame out(w, h, frame.colorimetry);

    for (int oy = 0; oy < h; ++oy) {
        const int y0 = static_cast<int>(static_cast<long long>(oy) * frame.height / h);
        const int y1 = std::max(y0 + 1, static_cast<int>(static_cast<long long>(oy + 1) * frame.height / h));
        for (int ox = 0; ox < w; ++ox) {
            const int x0 = static_cast<int>(static_cast<long long>(ox) * frame.width / w);
            const int x1 = std::max(x0 + 1, static_cast<int>(static_cast<long long>(ox + 1) * frame.width / w));
            Rgb acc{0.0, 0.0, 0.0};
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    const Rgb& p = frame.at(x, y);
                    acc[0] += p[0];
                    acc[1] += p[1];
                    acc[2] += p[2];
                }
            }
            const double n = static_cast<double>((y1 - y0) * (x1 - x0));
            out.at(ox, oy) = {acc[0] / n, acc[1] / n, acc[2] / n};
        }
    }
    return out;
}

} // namespace cdlgrade
