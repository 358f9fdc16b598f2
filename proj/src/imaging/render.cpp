#include "cdlgrade/render.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>

#include "cdlgrade/error.hpp"
#include "cdlgrade/parallel.hpp"

namespace cdlgrade::render {

namespace fs = std::filesystem;

namespace {

// Lattice packed as floats with the domain folded into a scale. Single
// precision stays far below one 16-bit output code.
class PackedLut {
public:
    explicit PackedLut(const lut::Lut3D& lut) : size_(lut.size), data_(lut.lattice.size() * 3) {
        for (std::size_t i = 0; i < lut.lattice.size(); ++i) {
            for (int c = 0; c < 3; ++c) data_[3 * i + static_cast<std::size_t>(c)] = static_cast<float>(lut.lattice[i][c]);
        }
        for (int c = 0; c < 3; ++c) {
            lo_[c] = lut.domain_min[c];
            scale_[c] = (size_ - 1) / (lut.domain_max[c] - lut.domain_min[c]);
        }
        top_ = static_cast<float>(size_ - 1);
        stride_[0] = 3;
        stride_[1] = 3 * static_cast<std::size_t>(size_);
        stride_[2] = stride_[1] * static_cast<std::size_t>(size_);
    }

    void sample(const Rgb& v, float out[3]) const {
        std::size_t offset = 0;
        float f[3];
        for (int c = 0; c < 3; ++c) {
            float t = static_cast<float>((v[c] - lo_[c]) * scale_[c]);
            t = t > 0.0f ? (t < top_ ? t : top_) : 0.0f; // also maps NaN to 0
            int i = static_cast<int>(t);
            if (i > size_ - 2) i = size_ - 2;
            f[c] = t - static_cast<float>(i);
            offset += static_cast<std::size_t>(i) * stride_[c];
        }
        const float* p = data_.data() + offset;
        const std::size_t dr = stride_[0], dg = stride_[1], db = stride_[2];
        const float fr = f[0], fg = f[1], fb = f[2];
        for (int c = 0; c < 3; ++c) {
            const float* q = p + c;
            const float c00 = q[0] + (q[dr] - q[0]) * fr;
            const float c10 = q[dg] + (q[dg + dr] - q[dg]) * fr;
            const float c01 = q[db] + (q[db + dr] - q[db]) * fr;
            const float c11 = q[db + dg] + (q[db + dg + dr] - q[db + dg]) * fr;
            const float c0 = c00 + (c10 - c00) * fg;
            const float c1 = c01 + (c11 - c01) * fg;
            out[c] = c0 + (c1 - c0) * fb;
        }
    }

private:
    int size_;
    std::vector<float> data_;
    double lo_[3], scale_[3];
    float top_;
    std::size_t stride_[3];
};

} // namespace

io::RawImage apply_to_raw(const io::RawImage& in, const lut::Lut3D& lut, const color::CodeNormalizer* normalizer) {
    const std::size_t n = static_cast<std::size_t>(in.width) * static_cast<std::size_t>(in.height);
    if (in.samples.size() != 3 * n) fail(ErrorCode::InvalidInput, "raw image sample count does not match its size");
    const PackedLut packed(lut);
    io::RawImage out{in.width, in.height, 65535, std::vector<std::uint16_t>(3 * n)};
    const double inv_max = 1.0 / in.max_code;
    const std::uint16_t* src = in.samples.data();
    std::uint16_t* dst = out.samples.data();
    float g[3];
    for (std::size_t i = 0; i < n; ++i, src += 3, dst += 3) {
        const Rgb v = normalizer ? (*normalizer)(src[0], src[1], src[2]) : Rgb{src[0] * inv_max, src[1] * inv_max, src[2] * inv_max};
        packed.sample(v, g);
        for (int c = 0; c < 3; ++c) {
            const float x = std::clamp(g[c], 0.0f, 1.0f);
            dst[c] = static_cast<std::uint16_t>(x * 65535.0f + 0.5f);
        }
    }
    return out;
}

ClipReport render_clip(const lut::Lut3D& lut, const fs::path& clip_dir, const fs::path& out_dir, const Source& source,
                       unsigned workers) {
    lut::validate(lut);
    const auto frames = io::list_clip_frames(clip_dir);
    if (frames.empty()) fail(ErrorCode::Io, "no .png or .ppm frames in " + clip_dir.string());
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) fail(ErrorCode::Io, "cannot create " + out_dir.string() + ": " + ec.message());
    if (fs::equivalent(clip_dir, out_dir, ec)) fail(ErrorCode::Io, "output directory must differ from the clip directory");

    const color::Chromaticity* gamut = source.is_display ? nullptr : &color::gamut(source.gamut);
    std::mutex mu;
    std::map<std::uint32_t, std::unique_ptr<color::CodeNormalizer>> normalizers;
    auto normalizer_for = [&](std::uint32_t max_code) -> const color::CodeNormalizer* {
        if (!gamut) return nullptr;
        std::lock_guard lock(mu);
        auto& slot = normalizers[max_code];
        if (!slot) slot = std::make_unique<color::CodeNormalizer>(source.curve, *gamut, max_code);
        return slot.get();
    };

    ClipReport report;
    report.frames_total = frames.size();
    std::vector<std::string> errors(frames.size());
    std::vector<std::size_t> pixels(frames.size(), 0);
    const auto t0 = std::chrono::steady_clock::now();
    run_indexed(frames.size(), workers, [&](std::size_t i) {
        try {
            const io::RawImage in = io::read_image(frames[i]);
            const io::RawImage out = apply_to_raw(in, lut, normalizer_for(in.max_code));
            io::write_image(out_dir / frames[i].filename(), out);
            pixels[i] = static_cast<std::size_t>(in.width) * static_cast<std::size_t>(in.height);
        } catch (const std::exception& e) {
            errors[i] = e.what();
            if (errors[i].empty()) errors[i] = "unknown error";
        }
    });
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (std::size_t i = 0; i < frames.size(); ++i) {
        if (errors[i].empty()) {
            ++report.frames_written;
            report.pixels += pixels[i];
        } else {
            report.errors.push_back({frames[i], errors[i]});
        }
    }
    return report;
}

} // namespace cdlgrade::render
