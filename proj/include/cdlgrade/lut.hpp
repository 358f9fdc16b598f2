#pragma once

#include <cstddef>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "cdlgrade/cdl.hpp"
#include "cdlgrade/frame.hpp"

namespace cdlgrade::lut {

inline constexpr int kDefaultSize = 33;

// size^3 lattice, red index varying fastest.
struct Lut3D {
    int size = kDefaultSize;
    std::vector<Rgb> lattice;
    Rgb domain_min{0.0, 0.0, 0.0};
    Rgb domain_max{1.0, 1.0, 1.0};
    std::string title;

    std::size_t index(int r, int g, int b) const {
        return static_cast<std::size_t>(r) + static_cast<std::size_t>(size) * (static_cast<std::size_t>(g) + static_cast<std::size_t>(size) * b);
    }
    const Rgb& node(int r, int g, int b) const { return lattice[index(r, g, b)]; }

    bool has_default_domain() const;

    static Lut3D identity(int size);
};

// Throws Format when size < 2, the lattice length is wrong, a value is not
// finite, or the domain is empty on some channel.
void validate(const Lut3D& lut);

// Node (i,j,k) = apply_cdl((i,j,k)/(size-1)). `workers` == 0 picks the
// hardware concurrency; the lattice is bit-identical for any worker count.
Lut3D compile_lut(const cdl::CdlParams& params, const cdl::RolloffConfig& rolloff, int size = kDefaultSize,
                  unsigned workers = 1, cdl::LiftMode lift_mode = cdl::LiftMode::Adaptive);

// Trilinear lookup of one value; inputs outside the domain are clamped.
Rgb sample_trilinear(const Lut3D& lut, const Rgb& rgb);

// Output colorimetry is rec709-display. Each output pixel depends only on the
// matching input pixel.
Frame apply_lut_trilinear(const Frame& frame, const Lut3D& lut, unsigned workers = 1);

// .cube writer: '#' header, optional TITLE, LUT_3D_SIZE, DOMAIN_MIN/MAX when
// non-default, then size^3 lines "%.6f %.6f %.6f" with LF endings. Double
// quotes and control characters in the title are replaced by single quotes /
// spaces.
void write_cube(const Lut3D& lut, std::ostream& out);
std::string to_cube_string(const Lut3D& lut);

// Tolerant .cube reader (blank lines, '#' comments, CRLF, keywords in any
// order before the data, LUT_3D_INPUT_RANGE). Errors: Format (with line
// number), Truncation (expected vs found data lines), Parse (line:column).
Lut3D parse_cube(std::istream& in);
Lut3D parse_cube_string(const std::string& text);

// ASC CDL ColorCorrection XML: Slope=gain, Offset=lift, Power=1/gamma,
// Saturation=s. Adaptive lift, contrast/pivot and the roll-off are not
// representable and are called out in an XML comment.
std::string export_cdl_xml(const cdl::CdlParams& params, const std::string& id = "cdlgrade");

} // namespace cdlgrade::lut
