#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <random>

#include "test_support.hpp"

#include "cdlgrade/error.hpp"
#include "cdlgrade/image_io.hpp"
#include "cdlgrade/render.hpp"

using namespace cdlgrade;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("cdlgrade_render_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

io::RawImage random_raw(int w, int h, std::uint32_t max_code, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_int_distribution<std::uint32_t> code(0, max_code);
    io::RawImage img{w, h, max_code, std::vector<std::uint16_t>(static_cast<std::size_t>(w) * h * 3)};
    for (auto& s : img.samples) s = static_cast<std::uint16_t>(code(rng));
    return img;
}

int max_code_diff(const io::RawImage& a, const io::RawImage& b) {
    REQUIRE(a.samples.size() == b.samples.size());
    int worst = 0;
    for (std::size_t i = 0; i < a.samples.size(); ++i) worst = std::max(worst, std::abs(int(a.samples[i]) - int(b.samples[i])));
    return worst;
}

std::string bytes_of(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

cdl::CdlParams warm_grade() {
    cdl::CdlParams p;
    p.lift = {0.01, 0.0, 0.02};
    p.gain = {1.08, 1.0, 0.94};
    p.saturation = 1.15;
    p.contrast = 1.1;
    return p;
}

} // namespace

TEST_CASE("identity LUT over a display clip returns the input") {
    TempDir tmp("identity");
    const fs::path clip = tmp.path / "clip", out = tmp.path / "out";
    fs::create_directories(clip);
    for (int i = 0; i < 3; ++i) io::write_image(clip / ("f" + std::to_string(i) + ".ppm"), random_raw(37, 21, 65535, 10u + i));
    render::Source src;
    src.is_display = true;
    const auto report = render::render_clip(lut::Lut3D::identity(33), clip, out, src, 2);
    CHECK(report.frames_written == 3);
    CHECK(report.errors.empty());
    CHECK(report.pixels == 3u * 37 * 21);
    for (int i = 0; i < 3; ++i) {
        const auto name = "f" + std::to_string(i) + ".ppm";
        CHECK(max_code_diff(io::read_image(clip / name), io::read_image(out / name)) <= 1);
    }
}

TEST_CASE("fused kernel agrees with the reference pipeline") {
    const auto lut = lut::compile_lut(warm_grade(), {}, 33, 1);
    for (std::uint32_t max_code : {255u, 65535u}) {
        CAPTURE(max_code);
        const auto raw = random_raw(64, 48, max_code, 3);
        const color::CodeNormalizer norm(LogCurveId::SLog3, color::gamut("sgamut3cine"), max_code);
        const auto fused = render::apply_to_raw(raw, lut, &norm);
        // Reference: exact decode + CST, double-precision trilinear, quantize.
        const Frame log = io::to_frame(raw, Colorimetry::camera_log(LogCurveId::SLog3, "sgamut3cine"));
        const Frame normalized = color::normalize(log, LogCurveId::SLog3, color::gamut("sgamut3cine"));
        const auto reference = io::quantize(lut::apply_lut_trilinear(normalized, lut, 1), 65535);
        CHECK(fused.max_code == 65535);
        CHECK(max_code_diff(fused, reference) <= 1);

        const auto display = render::apply_to_raw(raw, lut, nullptr);
        const auto display_ref = io::quantize(lut::apply_lut_trilinear(io::to_frame(raw, Colorimetry::rec709_display()), lut, 1), 65535);
        CHECK(max_code_diff(display, display_ref) <= 1);
    }
}

TEST_CASE("duplicate frames render byte-identically for any worker count") {
    TempDir tmp("dup");
    const fs::path clip = tmp.path / "clip";
    fs::create_directories(clip);
    const auto frame = random_raw(50, 30, 65535, 5);
    io::write_image(clip / "a_001.ppm", frame);
    io::write_image(clip / "a_002.ppm", frame);
    io::write_image(clip / "a_003.png", frame);
    const auto lut = lut::compile_lut(warm_grade(), {}, 33, 1);
    const auto r1 = render::render_clip(lut, clip, tmp.path / "o1", {}, 1);
    const auto r3 = render::render_clip(lut, clip, tmp.path / "o3", {}, 3);
    CHECK(r1.frames_written == 3);
    CHECK(bytes_of(tmp.path / "o1" / "a_001.ppm") == bytes_of(tmp.path / "o1" / "a_002.ppm"));
    for (const char* name : {"a_001.ppm", "a_002.ppm", "a_003.png"}) {
        CHECK(bytes_of(tmp.path / "o1" / name) == bytes_of(tmp.path / "o3" / name));
    }
    CHECK(io::read_image(tmp.path / "o1" / "a_003.png").samples == io::read_image(tmp.path / "o1" / "a_001.ppm").samples);
}

TEST_CASE("unreadable frames are reported and the rest still render") {
    TempDir tmp("errors");
    const fs::path clip = tmp.path / "clip";
    fs::create_directories(clip);
    io::write_image(clip / "f1.ppm", random_raw(8, 8, 255, 1));
    std::ofstream(clip / "f2.ppm") << "P6\n8 8\n255\nshort";
    io::write_image(clip / "f3.ppm", random_raw(8, 8, 255, 2));
    const auto report = render::render_clip(lut::Lut3D::identity(17), clip, tmp.path / "out", {});
    CHECK(report.frames_total == 3);
    CHECK(report.frames_written == 2);
    REQUIRE(report.errors.size() == 1);
    CHECK(report.errors[0].path.filename() == "f2.ppm");
    CHECK(report.errors[0].message.find("truncated") != std::string::npos);
    CHECK(fs::exists(tmp.path / "out" / "f3.ppm"));
    CHECK_FALSE(fs::exists(tmp.path / "out" / "f2.ppm"));
}

TEST_CASE("clip preconditions") {
    TempDir tmp("pre");
    CHECK_THROWS_AS(render::render_clip(lut::Lut3D::identity(5), tmp.path, tmp.path / "out", {}), Error);
    io::write_image(tmp.path / "f1.ppm", random_raw(4, 4, 255, 1));
    CHECK_THROWS_AS(render::render_clip(lut::Lut3D::identity(5), tmp.path, tmp.path, {}), Error);
    io::RawImage bad{4, 4, 255, std::vector<std::uint16_t>(5)};
    CHECK_THROWS_AS(render::apply_to_raw(bad, lut::Lut3D::identity(5), nullptr), Error);
}
