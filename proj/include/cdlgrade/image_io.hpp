#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cdlgrade/frame.hpp"

namespace cdlgrade::io {

// Interleaved RGB integer samples as stored on disk. max_code is 255 or 65535.
struct RawImage {
    int width = 0;
    int height = 0;
    std::uint32_t max_code = 65535;
    std::vector<std::uint16_t> samples;
};

enum class ImageFormat { Png, Ppm };

ImageFormat format_for(const std::filesystem::path& path);

// PNG (8/16-bit, gray/RGB/alpha/palette expanded to RGB) or binary PPM (P6,
// maxval 255 or 65535). Throws Io on unreadable or malformed files.
RawImage read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const RawImage& image);

std::vector<unsigned char> encode_png(const RawImage& image);
RawImage decode_png(const std::vector<unsigned char>& bytes);

Frame to_frame(const RawImage& image, Colorimetry colorimetry);

// Clamp to [0,1] and round to the nearest code value.
RawImage quantize(const Frame& frame, std::uint32_t max_code = 65535);

Frame read_frame(const std::filesystem::path& path, Colorimetry colorimetry);
void write_frame(const std::filesystem::path& path, const Frame& frame);

// Image files (.png/.ppm) of a clip directory in natural (numeric-aware) order.
std::vector<std::filesystem::path> list_clip_frames(const std::filesystem::path& dir);

// Write-to-temp then rename, so readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_text_file(const std::filesystem::path& path);

} // namespace cdlgrade::io
