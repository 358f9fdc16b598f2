#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "cdlgrade/color_science.hpp"
#include "cdlgrade/image_io.hpp"
#include "cdlgrade/lut.hpp"

namespace cdlgrade::render {

// Where clip pixels come from. Camera-log sources are decoded and transformed
// to Rec.709 before the LUT, the same normalization the previews use.
struct Source {
    LogCurveId curve = LogCurveId::SLog3;
    std::string gamut = "sgamut3cine";
    bool is_display = false; // frames are already Rec.709 display-referred
};

struct FrameError {
    std::filesystem::path path;
    std::string message;
};

struct ClipReport {
    std::size_t frames_total = 0;
    std::size_t frames_written = 0;
    std::size_t pixels = 0;
    std::vector<FrameError> errors;
    double seconds = 0.0;
};

// Fused per-pixel kernel: code values -> normalized Rec.709 -> trilinear LUT
// -> 16-bit codes. `normalizer` is null for display sources.
io::RawImage apply_to_raw(const io::RawImage& in, const lut::Lut3D& lut, const color::CodeNormalizer* normalizer);

// Renders every frame of `clip_dir` into `out_dir` (same file names and
// formats, 16-bit). Frames are processed in parallel; a frame that cannot be
// read or written is reported and the rest continue. Throws Io when the clip
// has no frames or out_dir is the clip directory.
ClipReport render_clip(const lut::Lut3D& lut, const std::filesystem::path& clip_dir, const std::filesystem::path& out_dir,
                       const Source& source, unsigned workers = 0);

} // namespace cdlgrade::render
