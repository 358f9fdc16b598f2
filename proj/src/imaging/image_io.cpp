#include "cdlgrade/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include "cdlgrade/error.hpp"

namespace cdlgrade::io {

namespace fs = std::filesystem;

namespace {

std::string lower_ext(const fs::path& p) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    return e;
}

struct PngReadState {
    const unsigned char* data;
    std::size_t size;
    std::size_t offset;
};

void png_read_from_memory(png_structp png, png_bytep out, png_size_t count) {
    auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
    if (st->offset + count > st->size) png_error(png, "unexpected end of PNG data");
    std::memcpy(out, st->data + st->offset, count);
    st->offset += count;
}

void png_write_to_vector(png_structp png, png_bytep data, png_size_t length) {
    auto* out = static_cast<std::vector<unsigned char>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + length);
}

void png_flush_noop(png_structp) {}

void png_error_to_exception(png_structp png, png_const_charp msg) {
    auto* err = static_cast<std::string*>(png_get_error_ptr(png));
    if (err) *err = msg;
    png_longjmp(png, 1);
}

RawImage read_ppm(const std::vector<unsigned char>& bytes, const fs::path& path) {
    std::size_t pos = 0;
    auto next_token = [&]() -> std::string {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
        std::string tok;
        while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#') tok.push_back(static_cast<char>(bytes[pos++]));
        return tok;
    };
    if (next_token() != "P6") fail(ErrorCode::Io, path.string() + ": not a binary PPM (P6)");
    RawImage img;
    try {
        img.width = std::stoi(next_token());
        img.height = std::stoi(next_token());
        img.max_code = static_cast<std::uint32_t>(std::stoul(next_token()));
    } catch (const std::exception&) {
        fail(ErrorCode::Io, path.string() + ": malformed PPM header");
    }
    if (img.width <= 0 || img.height <= 0 || img.max_code == 0 || img.max_code > 65535) {
        fail(ErrorCode::Io, path.string() + ": unsupported PPM dimensions or maxval");
    }
    ++pos; // single whitespace after maxval
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height * 3;
    const std::size_t bps = img.max_code > 255 ? 2 : 1;
    if (bytes.size() < pos + n * bps) fail(ErrorCode::Io, path.string() + ": truncated PPM data");
    img.samples.resize(n);
    const unsigned char* p = bytes.data() + pos;
    if (bps == 2) {
        for (std::size_t i = 0; i < n; ++i) img.samples[i] = static_cast<std::uint16_t>((p[2 * i] << 8) | p[2 * i + 1]);
    } else {
        for (std::size_t i = 0; i < n; ++i) img.samples[i] = p[i];
    }
    return img;
}

std::string encode_ppm(const RawImage& img) {
    std::ostringstream header;
    header << "P6\n" << img.width << ' ' << img.height << '\n' << img.max_code << '\n';
    std::string out = header.str();
    const std::size_t n = img.samples.size();
    const std::size_t start = out.size();
    if (img.max_code > 255) {
        out.resize(start + 2 * n);
        for (std::size_t i = 0; i < n; ++i) {
            out[start + 2 * i] = static_cast<char>(img.samples[i] >> 8);
            out[start + 2 * i + 1] = static_cast<char>(img.samples[i] & 0xFF);
        }
    } else {
        out.resize(start + n);
        for (std::size_t i = 0; i < n; ++i) out[start + i] = static_cast<char>(img.samples[i]);
    }
    return out;
}

std::vector<unsigned char> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open '" + path.string() + "'");
    in.seekg(0, std::ios::end);
    const auto size = in.tellg();
    if (size < 0) fail(ErrorCode::Io, "cannot size '" + path.string() + "'");
    std::vector<unsigned char> bytes(static_cast<std::size_t>(size));
    in.seekg(0, std::ios::beg);
    if (!in.read(reinterpret_cast<char*>(bytes.data()), size)) fail(ErrorCode::Io, "cannot read '" + path.string() + "'");
    return bytes;
}

} // namespace

ImageFormat format_for(const fs::path& path) {
    const std::string e = lower_ext(path);
    if (e == ".png") return ImageFormat::Png;
    if (e == ".ppm" || e == ".pnm") return ImageFormat::Ppm;
    fail(ErrorCode::InvalidInput, "unsupported image extension '" + e + "' (expected .png or .ppm)");
}

RawImage decode_png(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) fail(ErrorCode::Io, "not a PNG stream");
    std::string err;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_to_exception, nullptr);
    if (!png) fail(ErrorCode::Io, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    PngReadState st{bytes.data(), bytes.size(), 0};
    RawImage img;
    std::vector<png_bytep> rows;
    std::vector<unsigned char> buffer;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorCode::Io, "PNG decode error: " + err);
    }
    png_set_read_fn(png, &st, png_read_from_memory);
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png), png_set_strip_alpha(png);
    if (depth == 16) png_set_swap(png);
    png_read_update_info(png, info);

    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    const int out_depth = png_get_bit_depth(png, info);
    img.max_code = out_depth == 16 ? 65535 : 255;
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    buffer.resize(rowbytes * img.height);
    rows.resize(img.height);
    for (int y = 0; y < img.height; ++y) rows[y] = buffer.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    const std::size_t n = static_cast<std::size_t>(img.width) * img.height * 3;
    img.samples.resize(n);
    if (out_depth == 16) {
        for (int y = 0; y < img.height; ++y) {
            std::memcpy(img.samples.data() + static_cast<std::size_t>(y) * img.width * 3, rows[y],
                        static_cast<std::size_t>(img.width) * 3 * 2);
        }
    } else {
        for (int y = 0; y < img.height; ++y) {
            for (int i = 0; i < img.width * 3; ++i) img.samples[static_cast<std::size_t>(y) * img.width * 3 + i] = rows[y][i];
        }
    }
    return img;
}

std::vector<unsigned char> encode_png(const RawImage& img) {
    std::string err;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_to_exception, nullptr);
    if (!png) fail(ErrorCode::Io, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    std::vector<unsigned char> out;
    const bool wide = img.max_code > 255;
    const std::size_t rowbytes = static_cast<std::size_t>(img.width) * 3 * (wide ? 2 : 1);
    std::vector<unsigned char> row(rowbytes);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorCode::Io, "PNG encode error: " + err);
    }
    png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
    png_set_compression_level(png, 3);
    png_set_IHDR(png, info, img.width, img.height, wide ? 16 : 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y) {
        const std::uint16_t* src = img.samples.data() + static_cast<std::size_t>(y) * img.width * 3;
        if (wide) {
            for (int i = 0; i < img.width * 3; ++i) {
                row[2 * i] = static_cast<unsigned char>(src[i] >> 8);
                row[2 * i + 1] = static_cast<unsigned char>(src[i] & 0xFF);
            }
        } else {
            for (int i = 0; i < img.width * 3; ++i) row[i] = static_cast<unsigned char>(src[i]);
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

RawImage read_image(const fs::path& path) {
    const auto bytes = read_bytes(path);
    try {
        if (format_for(path) == ImageFormat::Png) return decode_png(bytes);
        return read_ppm(bytes, path);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::Io && std::string(e.what()).find(path.string()) == std::string::npos) {
            fail(ErrorCode::Io, path.string() + ": " + e.what());
        }
        throw;
    }
}

void write_image(const fs::path& path, const RawImage& image) {
    std::string data;
    if (format_for(path) == ImageFormat::Png) {
        const auto bytes = encode_png(image);
        data.assign(bytes.begin(), bytes.end());
    } else {
        data = encode_ppm(image);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write '" + path.string() + "'");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) fail(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

Frame to_frame(const RawImage& image, Colorimetry colorimetry) {
    Frame f(image.width, image.height, std::move(colorimetry));
    const double scale = 1.0 / image.max_code;
    for (std::size_t i = 0; i < f.pixels.size(); ++i) {
        f.pixels[i] = {image.samples[3 * i] * scale, image.samples[3 * i + 1] * scale, image.samples[3 * i + 2] * scale};
    }
    return f;
}

RawImage quantize(const Frame& frame, std::uint32_t max_code) {
    RawImage img;
    img.width = frame.width;
    img.height = frame.height;
    img.max_code = max_code;
    img.samples.resize(frame.pixels.size() * 3);
    for (std::size_t i = 0; i < frame.pixels.size(); ++i) {
        for (int c = 0; c < 3; ++c) {
            const double v = std::clamp(frame.pixels[i][c], 0.0, 1.0);
            img.samples[3 * i + c] = static_cast<std::uint16_t>(std::lround(v * max_code));
        }
    }
    return img;
}

Frame read_frame(const fs::path& path, Colorimetry colorimetry) { return to_frame(read_image(path), std::move(colorimetry)); }

void write_frame(const fs::path& path, const Frame& frame) { write_image(path, quantize(frame)); }

std::vector<fs::path> list_clip_frames(const fs::path& dir) {
    if (!fs::is_directory(dir)) fail(ErrorCode::InvalidInput, "'" + dir.string() + "' is not a directory");
    std::vector<fs::path> frames;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string e = lower_ext(entry.path());
        if (e == ".png" || e == ".ppm" || e == ".pnm") frames.push_back(entry.path());
    }
    // Natural order: digit runs compare numerically.
    auto natural_less = [](const fs::path& pa, const fs::path& pb) {
        const std::string a = pa.filename().string(), b = pb.filename().string();
        std::size_t i = 0, j = 0;
        while (i < a.size() && j < b.size()) {
            if (std::isdigit(static_cast<unsigned char>(a[i])) && std::isdigit(static_cast<unsigned char>(b[j]))) {
                std::size_t i2 = i, j2 = j;
                while (i2 < a.size() && std::isdigit(static_cast<unsigned char>(a[i2]))) ++i2;
                while (j2 < b.size() && std::isdigit(static_cast<unsigned char>(b[j2]))) ++j2;
                std::string na = a.substr(i, i2 - i), nb = b.substr(j, j2 - j);
                na.erase(0, std::min(na.find_first_not_of('0'), na.size()));
                nb.erase(0, std::min(nb.find_first_not_of('0'), nb.size()));
                if (na.size() != nb.size()) return na.size() < nb.size();
                if (na != nb) return na < nb;
                i = i2;
                j = j2;
            } else {
                if (a[i] != b[j]) return a[i] < b[j];
                ++i;
                ++j;
            }
        }
        if (a.size() - i != b.size() - j) return a.size() - i < b.size() - j;
        return a < b;
    };
    std::sort(frames.begin(), frames.end(), natural_less);
    return frames;
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorCode::Io, "cannot write '" + tmp.string() + "'");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) fail(ErrorCode::Io, "write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) fail(ErrorCode::Io, "rename to '" + path.string() + "' failed: " + ec.message());
}

std::string read_text_file(const fs::path& path) {
    const auto bytes = read_bytes(path);
    return {bytes.begin(), bytes.end()};
}

} // namespace cdlgrade::io
