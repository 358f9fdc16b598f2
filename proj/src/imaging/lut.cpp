#include "cdlgrade/lut.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "cdlgrade/error.hpp"
#include "cdlgrade/parallel.hpp"

namespace cdlgrade::lut {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string sanitize_title(const std::string& title) {
    std::string out;
    for (char c : title) {
        if (c == '"') out.push_back('\'');
        else if (static_cast<unsigned char>(c) < 0x20 || c == 0x7f) out.push_back(' ');
        else out.push_back(c);
    }
    return out;
}

void append_fixed6(std::string& out, double v) {
    if (v == 0.0) v = 0.0; // drop negative zero
    char buf[48];
    const int n = std::snprintf(buf, sizeof buf, "%.6f", v);
    if (n > 0 && std::string_view(buf, n) == "-0.000000") {
        out += "0.000000";
        return;
    }
    out.append(buf, static_cast<std::size_t>(n));
}

std::string shortest(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

[[noreturn]] void parse_fail(int line, int column, const std::string& what) {
    fail(ErrorCode::Parse, "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what);
}

} // namespace

bool Lut3D::has_default_domain() const {
    return domain_min == Rgb{0.0, 0.0, 0.0} && domain_max == Rgb{1.0, 1.0, 1.0};
}

Lut3D Lut3D::identity(int size) {
    if (size < 2) fail(ErrorCode::InvalidInput, "LUT size must be >= 2");
    Lut3D lut;
    lut.size = size;
    lut.lattice.resize(static_cast<std::size_t>(size) * size * size);
    const double denom = size - 1;
    for (int b = 0; b < size; ++b)
        for (int g = 0; g < size; ++g)
            for (int r = 0; r < size; ++r) lut.lattice[lut.index(r, g, b)] = {r / denom, g / denom, b / denom};
    return lut;
}

void validate(const Lut3D& lut) {
    if (lut.size < 2) fail(ErrorCode::Format, "LUT size must be >= 2");
    const std::size_t n = static_cast<std::size_t>(lut.size) * lut.size * lut.size;
    if (lut.lattice.size() != n) {
        fail(ErrorCode::Format, "lattice has " + std::to_string(lut.lattice.size()) + " entries, expected " + std::to_string(n));
    }
    for (int c = 0; c < 3; ++c) {
        if (!(lut.domain_min[c] < lut.domain_max[c])) fail(ErrorCode::Format, "empty LUT domain on channel " + std::to_string(c));
    }
    for (const auto& v : lut.lattice) {
        if (!std::isfinite(v[0]) || !std::isfinite(v[1]) || !std::isfinite(v[2])) fail(ErrorCode::Format, "non-finite lattice value");
    }
}

Lut3D compile_lut(const cdl::CdlParams& params, const cdl::RolloffConfig& rolloff, int size, unsigned workers,
                  cdl::LiftMode lift_mode) {
    if (size < 2 || size > 129) fail(ErrorCode::InvalidInput, "LUT size must be in [2, 129], got " + std::to_string(size));
    if (rolloff.enabled && !(rolloff.tau > 0.0 && rolloff.tau < 1.0)) {
        fail(ErrorCode::Validation, "roll-off threshold must lie in (0,1)");
    }
    cdl::require_valid(params);

    Lut3D lut;
    lut.size = size;
    const std::size_t n = static_cast<std::size_t>(size) * size * size;
    lut.lattice.resize(n);
    const double denom = size - 1;
    parallel_chunks(n, workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto r = static_cast<int>(i % size);
            const auto g = static_cast<int>((i / size) % size);
            const auto b = static_cast<int>(i / (static_cast<std::size_t>(size) * size));
            lut.lattice[i] = cdl::apply_cdl_unchecked({r / denom, g / denom, b / denom}, params, rolloff, lift_mode);
        }
    });
    return lut;
}

Rgb sample_trilinear(const Lut3D& lut, const Rgb& rgb) {
    const int max_index = lut.size - 1;
    int base[3];
    double frac[3];
    for (int c = 0; c < 3; ++c) {
        const double lo = lut.domain_min[c], hi = lut.domain_max[c];
        double t = (std::clamp(rgb[c], lo, hi) - lo) / (hi - lo) * max_index;
        if (!(t >= 0.0)) t = 0.0; // NaN guard
        int i = static_cast<int>(t);
        if (i >= max_index) i = max_index - 1;
        base[c] = i;
        frac[c] = t - i;
    }
    const std::size_t s = static_cast<std::size_t>(lut.size);
    const std::size_t i000 = lut.index(base[0], base[1], base[2]);
    const std::size_t dr = 1, dg = s, db = s * s;
    const Rgb* L = lut.lattice.data();
    const double fr = frac[0], fg = frac[1], fb = frac[2];
    // a*(1-t) + b*t is exact at t == 0 and t == 1, so lattice nodes
    // (including the top face) come back bit-identical.
    auto lerp = [](double a, double b, double t) { return a * (1.0 - t) + b * t; };
    Rgb out;
    for (int c = 0; c < 3; ++c) {
        const double c00 = lerp(L[i000][c], L[i000 + dr][c], fr);
        const double c10 = lerp(L[i000 + dg][c], L[i000 + dg + dr][c], fr);
        const double c01 = lerp(L[i000 + db][c], L[i000 + db + dr][c], fr);
        const double c11 = lerp(L[i000 + db + dg][c], L[i000 + db + dg + dr][c], fr);
        out[c] = lerp(lerp(c00, c10, fg), lerp(c01, c11, fg), fb);
    }
    return out;
}

Frame apply_lut_trilinear(const Frame& frame, const Lut3D& lut, unsigned workers) {
    Frame out(frame.width, frame.height, Colorimetry::rec709_display());
    parallel_chunks(frame.pixels.size(), workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) out.pixels[i] = sample_trilinear(lut, frame.pixels[i]);
    });
    return out;
}

std::string to_cube_string(const Lut3D& lut) {
    validate(lut);
    std::string out;
    out.reserve(lut.lattice.size() * 27 + 256);
    out += "# Generated by cdlgrade\n";
    const std::string title = sanitize_title(lut.title);
    if (!title.empty()) out += "TITLE \"" + title + "\"\n";
    out += "LUT_3D_SIZE " + std::to_string(lut.size) + "\n";
    if (!lut.has_default_domain()) {
        for (const auto& [key, v] : {std::pair{"DOMAIN_MIN", lut.domain_min}, std::pair{"DOMAIN_MAX", lut.domain_max}}) {
            out += key;
            for (double c : v) {
                out += ' ';
                append_fixed6(out, c);
            }
            out += '\n';
        }
    }
    for (const auto& v : lut.lattice) {
        append_fixed6(out, v[0]);
        out += ' ';
        append_fixed6(out, v[1]);
        out += ' ';
        append_fixed6(out, v[2]);
        out += '\n';
    }
    return out;
}

void write_cube(const Lut3D& lut, std::ostream& out) {
    const std::string text = to_cube_string(lut);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) fail(ErrorCode::Io, "failed to write .cube stream");
}

Lut3D parse_cube(std::istream& in) {
    Lut3D lut;
    lut.lattice.clear();
    int size = 0;
    int size_line = 0;
    std::size_t expected = 0;
    std::string raw;
    int line_no = 0;
    bool in_data = false;

    auto parse_number = [&](const std::string& tok, int column) {
        double v = 0.0;
        const char* first = tok.data();
        const char* last = tok.data() + tok.size();
        if (!tok.empty() && tok[0] == '+') ++first;
        auto [ptr, ec] = std::from_chars(first, last, v);
        if (ec != std::errc() || ptr != last) parse_fail(line_no, column, "expected a number, found '" + tok + "'");
        return v;
    };
    auto split = [](const std::string& s) {
        std::vector<std::pair<std::string, int>> toks;
        std::size_t i = 0;
        while (i < s.size()) {
            while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
            const std::size_t b = i;
            while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
            if (i > b) toks.emplace_back(s.substr(b, i - b), static_cast<int>(b) + 1);
        }
        return toks;
    };
    auto read_triple = [&](const std::vector<std::pair<std::string, int>>& toks, std::size_t first) {
        if (toks.size() != first + 3) {
            parse_fail(line_no, toks.empty() ? 1 : toks[0].second, "expected 3 values, found " + std::to_string(toks.size() - first));
        }
        return Rgb{parse_number(toks[first].first, toks[first].second), parse_number(toks[first + 1].first, toks[first + 1].second),
                   parse_number(toks[first + 2].first, toks[first + 2].second)};
    };

    while (std::getline(in, raw)) {
        ++line_no;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        if (line_no == 1 && raw.size() >= 3 && raw.compare(0, 3, "\xEF\xBB\xBF") == 0) raw.erase(0, 3);
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;

        const auto toks = split(line);
        const std::string& key = toks[0].first;
        const bool numeric = std::isdigit(static_cast<unsigned char>(key[0])) || key[0] == '-' || key[0] == '+' || key[0] == '.';
        if (numeric) {
            if (size == 0) fail(ErrorCode::Format, "line " + std::to_string(line_no) + ": data before LUT_3D_SIZE");
            in_data = true;
            if (lut.lattice.size() >= expected) {
                fail(ErrorCode::Truncation, "line " + std::to_string(line_no) + ": more than the expected " + std::to_string(expected) +
                                                " data lines");
            }
            lut.lattice.push_back(read_triple(toks, 0));
            continue;
        }
        if (in_data) fail(ErrorCode::Format, "line " + std::to_string(line_no) + ": keyword '" + key + "' after data");
        if (key == "TITLE") {
            const auto q1 = line.find('"');
            const auto q2 = line.rfind('"');
            lut.title = (q1 != std::string::npos && q2 > q1) ? line.substr(q1 + 1, q2 - q1 - 1) : trim(line.substr(5));
        } else if (key == "LUT_3D_SIZE") {
            if (toks.size() != 2) fail(ErrorCode::Format, "line " + std::to_string(line_no) + ": LUT_3D_SIZE takes one value");
            const double v = parse_number(toks[1].first, toks[1].second);
            if (v != std::floor(v) || v < 2 || v > 256) fail(ErrorCode::Format, "line " + std::to_string(line_no) + ": bad LUT_3D_SIZE");
            size = static_cast<int>(v);
            size_line = line_no;
            expected = static_cast<std::size_t>(size) * size * size;
            lut.lattice.reserve(expected);
        } else if (key == "DOMAIN_MIN") {
            lut.domain_min = read_triple(toks, 1);
        } else if (key == "DOMAIN_MAX") {
            lut.domain_max = read_triple(toks, 1);
        } else if (key == "LUT_3D_INPUT_RANGE") {
            if (toks.size() != 3) fail(ErrorCode::Format, "line " + std::to_string(line_no) + ": LUT_3D_INPUT_RANGE takes two values");
            const double lo = parse_number(toks[1].first, toks[1].second);
            const double hi = parse_number(toks[2].first, toks[2].second);
            lut.domain_min = {lo, lo, lo};
            lut.domain_max = {hi, hi, hi};
        } else if (key == "LUT_1D_SIZE" || key == "LUT_1D_INPUT_RANGE") {
            fail(ErrorCode::Format, "line " + std::to_string(line_no) + ": 1D / shaper LUTs are not supported");
        } else {
            fail(ErrorCode::Format, "line " + std::to_string(line_no) + ": unknown keyword '" + key + "'");
        }
    }
    if (size == 0) fail(ErrorCode::Format, "line " + std::to_string(line_no) + ": missing LUT_3D_SIZE");
    if (lut.lattice.size() != expected) {
        fail(ErrorCode::Truncation, "LUT_3D_SIZE " + std::to_string(size) + " (line " + std::to_string(size_line) + ") expects " +
                                        std::to_string(expected) + " data lines, found " + std::to_string(lut.lattice.size()));
    }
    lut.size = size;
    validate(lut);
    return lut;
}

Lut3D parse_cube_string(const std::string& text) {
    std::istringstream in(text);
    return parse_cube(in);
}

std::string export_cdl_xml(const cdl::CdlParams& p, const std::string& id) {
    cdl::require_valid(p);
    auto triple = [](const Rgb& v) { return shortest(v[0]) + " " + shortest(v[1]) + " " + shortest(v[2]); };
    const Rgb power{1.0 / p.gamma[0], 1.0 / p.gamma[1], 1.0 / p.gamma[2]};
    std::string safe_id;
    for (char c : id) safe_id += (c == '"' || c == '<' || c == '>' || c == '&') ? '_' : c;

    std::ostringstream xml;
    xml << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<ColorCorrection id=\"" << safe_id << "\">\n"
        << "  <!-- Lossy export: adaptive lift decay (offset scaled by 1 - x), contrast " << shortest(p.contrast)
        << " about pivot " << shortest(p.pivot)
        << ", and the highlight roll-off are NOT representable in ASC CDL. The accompanying .cube file is authoritative. -->\n"
        << "  <SOPNode>\n"
        << "    <Slope>" << triple(p.gain) << "</Slope>\n"
        << "    <Offset>" << triple(p.lift) << "</Offset>\n"
        << "    <Power>" << triple(power) << "</Power>\n"
        << "  </SOPNode>\n"
        << "  <SatNode>\n"
        << "    <Saturation>" << shortest(p.saturation) << "</Saturation>\n"
        << "  </SatNode>\n"
        << "</ColorCorrection>\n";
    return xml.str();
}

} // namespace cdlgrade::lut
