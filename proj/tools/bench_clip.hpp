#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <random>

#include "cdlgrade/color_science.hpp"
#include "cdlgrade/image_io.hpp"

namespace cdlgrade::bench {

inline io::RawImage synthetic_frame(int w, int h, int seed) {
    const auto& curve = color::log_curve(LogCurveId::SLog3);
    io::RawImage img{w, h, 65535, std::vector<std::uint16_t>(static_cast<std::size_t>(w) * h * 3)};
    std::mt19937 rng(static_cast<unsigned>(seed));
    std::uniform_real_distribution<double> noise(-0.01, 0.01);
    std::size_t k = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double base = 0.002 + 2.0 * x / w * (0.5 + 0.5 * y / h);
            const double lin[3] = {base * 1.1, base, base * (0.8 + 0.4 * y / h)};
            for (double l : lin) {
                const double code = std::clamp(curve.encode(std::max(0.0, l + noise(rng) * base)), 0.0, 1.0);
                img.samples[k++] = static_cast<std::uint16_t>(code * 65535.0 + 0.5);
            }
        }
    }
    return img;
}

// S-Log3 clip of `frames` PPMs: a handful of distinct frames, hard-linked up
// to the requested count.
inline void write_clip(const std::filesystem::path& clip, int frames, int width, int height) {
    namespace fs = std::filesystem;
    constexpr int kDistinct = 4;
    fs::create_directories(clip);
    auto name = [](int i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "frame_%04d.ppm", i + 1);
        return std::string(buf);
    };
    for (int i = 0; i < frames; ++i) {
        const fs::path p = clip / name(i);
        if (fs::exists(p)) continue;
        if (i < kDistinct) {
            io::write_image(p, synthetic_frame(width, height, i));
        } else {
            std::error_code ec;
            fs::create_hard_link(clip / name(i % kDistinct), p, ec);
            if (ec) fs::copy_file(clip / name(i % kDistinct), p);
        }
    }
}

} // namespace cdlgrade::bench
