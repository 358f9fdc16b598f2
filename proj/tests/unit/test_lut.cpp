#include "doctest.h"

#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "cdlgrade/error.hpp"
#include "cdlgrade/lut.hpp"
#include "test_support.hpp"

using namespace cdlgrade;
using namespace cdlgrade::lut;

namespace {

const cdl::RolloffConfig kOn{0.8, true};

ErrorCode code_of(const std::string& text) {
    try {
        (void)parse_cube_string(text);
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::Internal;
}

std::string message_of(const std::string& text) {
    try {
        (void)parse_cube_string(text);
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

// Minimal reader for the flat XML we emit: text content of the first <tag>.
std::string xml_text(const std::string& xml, const std::string& tag) {
    const auto open = xml.find("<" + tag + ">");
    REQUIRE(open != std::string::npos);
    const auto begin = open + tag.size() + 2;
    const auto end = xml.find("</" + tag + ">", begin);
    REQUIRE(end != std::string::npos);
    return xml.substr(begin, end - begin);
}

Rgb xml_triple(const std::string& xml, const std::string& tag) {
    std::istringstream in(xml_text(xml, tag));
    Rgb v{};
    in >> v[0] >> v[1] >> v[2];
    return v;
}

} // namespace

TEST_CASE("identity params compile to the identity lattice") {
    const Lut3D lut = compile_lut(cdl::CdlParams::identity(), {0.8, false});
    const Lut3D ident = Lut3D::identity(33);
    REQUIRE(lut.lattice.size() == 35937u);
    for (std::size_t i = 0; i < lut.lattice.size(); ++i) {
        CHECK(testing::max_abs_diff(lut.lattice[i], ident.lattice[i]) <= 1e-9);
    }
}

TEST_CASE("lattice ordering is red-fastest") {
    cdl::CdlParams p;
    p.gain = {1.2, 1.0, 1.0};
    const Lut3D lut = compile_lut(p, {0.8, false});
    const Rgb& node = lut.lattice[32];
    CHECK(node[0] == 1.0);
    CHECK(node[1] == 0.0);
    CHECK(node[2] == 0.0);
    CHECK(lut.node(32, 0, 0) == node);
}

TEST_CASE("compiled lattice is bit-identical for any worker count") {
    std::mt19937_64 rng(17);
    const cdl::CdlParams p = testing::random_valid_params(rng);
    const Lut3D one = compile_lut(p, kOn, 33, 1);
    for (unsigned w : {2u, 3u, 8u}) {
        const Lut3D many = compile_lut(p, kOn, 33, w);
        CHECK(many.lattice == one.lattice);
    }
}

TEST_CASE("compile_lut rejects bad sizes and params") {
    CHECK_THROWS_AS(compile_lut(cdl::CdlParams::identity(), kOn, 1), Error);
    cdl::CdlParams bad;
    bad.contrast = 10.0;
    CHECK_THROWS_AS(compile_lut(bad, kOn), Error);
}

TEST_CASE("trilinear lookup is exact on nodes and on affine maps") {
    std::mt19937_64 rng(23);
    const Lut3D ident = Lut3D::identity(17);
    for (int i = 0; i < 5000; ++i) {
        const Rgb x = testing::random_rgb(rng);
        CHECK(testing::max_abs_diff(sample_trilinear(ident, x), x) < 1e-12);
    }

    cdl::CdlParams p;
    p.gain = {0.8, 0.9, 0.7};
    p.lift = {0.05, 0.0, 0.02};
    const Lut3D lut = compile_lut(p, kOn, 9);
    for (int r = 0; r < 9; ++r) {
        for (int g = 0; g < 9; ++g) {
            for (int b = 0; b < 9; ++b) {
                const Rgb in{r / 8.0, g / 8.0, b / 8.0};
                CHECK(sample_trilinear(lut, in) == lut.node(r, g, b));
            }
        }
    }
}

TEST_CASE("trilinear reproduces multilinear functions off-lattice") {
    auto f = [](const Rgb& x) -> Rgb {
        return {0.2 + 0.5 * x[0] * x[1], x[1] * x[2] - 0.3 * x[0], x[0] * x[1] * x[2]};
    };
    Lut3D lut = Lut3D::identity(7);
    for (auto& node : lut.lattice) node = f(node);
    std::mt19937_64 rng(53);
    for (int i = 0; i < 5000; ++i) {
        const Rgb x = testing::random_rgb(rng);
        CHECK(testing::max_abs_diff(sample_trilinear(lut, x), f(x)) < 1e-6);
    }
}

TEST_CASE("out-of-domain inputs clamp") {
    const Lut3D ident = Lut3D::identity(5);
    CHECK(sample_trilinear(ident, {-0.5, 1.5, 0.5}) == Rgb{0.0, 1.0, 0.5});
}

TEST_CASE("LUT application is per-pixel") {
    std::mt19937_64 rng(29);
    cdl::CdlParams p = testing::random_typical_params(rng);
    const Lut3D lut = compile_lut(p, kOn, 17);
    const Frame f = testing::random_frame(rng, 16, 9);
    const Frame out = apply_lut_trilinear(f, lut, 1);

    std::vector<std::size_t> perm(f.pixels.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    Frame shuffled = f;
    for (std::size_t i = 0; i < perm.size(); ++i) shuffled.pixels[i] = f.pixels[perm[i]];
    const Frame out_shuffled = apply_lut_trilinear(shuffled, lut, 3);
    for (std::size_t i = 0; i < perm.size(); ++i) CHECK(out_shuffled.pixels[i] == out.pixels[perm[i]]);
    CHECK(out.colorimetry == Colorimetry::rec709_display());
}

// Clamp kinks inside a lattice cell bound the error at about h*|slope jump|/4;
// 1.3e-2 is the observed worst case for small grades.
TEST_CASE("trilinear error against direct evaluation for typical grades") {
    std::mt19937_64 rng(31);
    for (int s = 0; s < 5; ++s) {
        const cdl::CdlParams p = testing::random_typical_params(rng);
        const Lut3D lut = compile_lut(p, kOn);
        double worst = 0.0;
        for (int i = 0; i < 4000; ++i) {
            const Rgb x = testing::random_rgb(rng);
            worst = std::max(worst, testing::max_abs_diff(sample_trilinear(lut, x), cdl::apply_cdl(x, p, kOn)));
        }
        CHECK(worst < 2e-2);
    }

    cdl::CdlParams smooth;
    smooth.gamma = {1.1, 0.95, 1.05};
    smooth.gain = {0.9, 0.95, 0.85};
    const Lut3D lut = compile_lut(smooth, kOn);
    double worst = 0.0;
    for (int i = 0; i < 4000; ++i) {
        const Rgb x = testing::random_rgb(rng);
        worst = std::max(worst, testing::max_abs_diff(sample_trilinear(lut, x), cdl::apply_cdl(x, smooth, kOn)));
    }
    CHECK(worst < 5e-3);
}

TEST_CASE(".cube writer layout") {
    Lut3D lut = Lut3D::identity(2);
    lut.title = "say \"hi\"";
    const std::string s = to_cube_string(lut);
    CHECK(s.rfind("# Generated by cdlgrade\n", 0) == 0);
    CHECK(s.find("TITLE \"say 'hi'\"\n") != std::string::npos);
    CHECK(s.find("LUT_3D_SIZE 2\n") != std::string::npos);
    CHECK(s.find("DOMAIN_MIN") == std::string::npos);
    CHECK(s.find("\r") == std::string::npos);
    CHECK(s.find("1.000000 0.000000 0.000000\n") != std::string::npos);

    lut.domain_max = {2.0, 2.0, 2.0};
    CHECK(to_cube_string(lut).find("DOMAIN_MAX 2.000000 2.000000 2.000000") != std::string::npos);
}

TEST_CASE(".cube round trip stays within the written precision") {
    std::mt19937_64 rng(37);
    const cdl::CdlParams p = testing::random_valid_params(rng);
    Lut3D lut = compile_lut(p, kOn);
    lut.title = "round trip";
    const Lut3D back = parse_cube_string(to_cube_string(lut));
    CHECK(back.size == 33);
    CHECK(back.title == "round trip");
    REQUIRE(back.lattice.size() == lut.lattice.size());
    for (std::size_t i = 0; i < lut.lattice.size(); ++i) {
        CHECK(testing::max_abs_diff(back.lattice[i], lut.lattice[i]) <= 5e-7 + 1e-12);
    }
}

TEST_CASE(".cube parser diagnostics") {
    std::string trunc = "LUT_3D_SIZE 33\n";
    for (int i = 0; i < 100; ++i) trunc += "0 0 0\n";
    CHECK(code_of(trunc) == ErrorCode::Truncation);
    CHECK(message_of(trunc).find("35937") != std::string::npos);

    CHECK(code_of("0 0 0\n") == ErrorCode::Format);
    CHECK(message_of("# c\nLUT_1D_SIZE 4\n").find("line 2") != std::string::npos);
    CHECK(code_of("LUT_1D_SIZE 4\n") == ErrorCode::Format);

    const std::string bad = "LUT_3D_SIZE 2\n0 0 0\n1 0 0\n0 1 0\n1 1 x\n0 0 1\n1 0 1\n0 1 1\n1 1 1\n";
    CHECK(code_of(bad) == ErrorCode::Parse);
    CHECK(message_of(bad).find("line 5") != std::string::npos);
}

TEST_CASE("hand-authored NLE-style .cube parses") {
    std::ifstream in(CDLGRADE_FIXTURE_DIR "/nle_sample.cube", std::ios::binary);
    REQUIRE(in.good());
    const Lut3D lut = parse_cube(in);
    CHECK(lut.size == 3);
    CHECK(lut.title == "Warm Print 03");
    CHECK(lut.has_default_domain());
    CHECK(lut.node(2, 0, 0)[0] == 1.0);
    CHECK(std::abs(lut.node(0, 0, 2)[2] - 0.95) < 1e-12);
    CHECK(std::abs(sample_trilinear(lut, {0.5, 0.5, 0.5})[0] - 0.525) < 1e-12);
}

TEST_CASE("CDL XML carries slope, offset, power and saturation") {
    cdl::CdlParams p;
    p.gain = {1.1, 1.0, 0.95};
    p.lift = {0.01, -0.02, 0.0};
    p.gamma = {1.25, 1.0, 0.8};
    p.saturation = 0.9;
    p.contrast = 1.2;
    const std::string xml = export_cdl_xml(p, "shot<1>");
    CHECK(xml.find("id=\"shot_1_\"") != std::string::npos);
    CHECK(xml_triple(xml, "Slope") == p.gain);
    CHECK(xml_triple(xml, "Offset") == p.lift);
    const Rgb power = xml_triple(xml, "Power");
    for (int c = 0; c < 3; ++c) CHECK(std::abs(1.0 / power[c] - p.gamma[c]) < 1e-12);
    CHECK(std::stod(xml_text(xml, "Saturation")) == 0.9);
    CHECK(xml.find("NOT representable") != std::string::npos);
}
