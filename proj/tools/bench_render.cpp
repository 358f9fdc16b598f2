// Render throughput bench: N synthetic S-Log3 frames through a 33^3 LUT.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <thread>

#include "CLI11.hpp"

#include "bench_clip.hpp"

#include "cdlgrade/lut.hpp"
#include "cdlgrade/render.hpp"

namespace fs = std::filesystem;
using namespace cdlgrade;

int main(int argc, char** argv) {
    CLI::App app{"cdlgrade render bench"};
    int frames = 100, width = 1920, height = 1080;
    unsigned workers = 0;
    std::string dir;
    bool keep = false;
    app.add_option("--frames", frames, "Frame count")->check(CLI::PositiveNumber);
    app.add_option("--width", width)->check(CLI::PositiveNumber);
    app.add_option("--height", height)->check(CLI::PositiveNumber);
    app.add_option("--workers", workers, "0 = all cores");
    app.add_option("--dir", dir, "Scratch directory (default: system temp)");
    app.add_flag("--keep", keep, "Keep generated frames");
    CLI11_PARSE(app, argc, argv);

    const fs::path root = dir.empty() ? fs::temp_directory_path() / "cdlgrade_bench" : fs::path(dir);
    const fs::path clip = root / "clip", out = root / "out";
    fs::remove_all(out);

    bench::write_clip(clip, frames, width, height);

    cdl::CdlParams params;
    params.lift = {0.01, 0.0, 0.02};
    params.gamma = {1.05, 1.0, 0.95};
    params.gain = {1.08, 1.0, 0.94};
    params.saturation = 1.15;
    params.contrast = 1.1;
    const lut::Lut3D lut = lut::compile_lut(params, {}, lut::kDefaultSize, 0);

    const auto report = render::render_clip(lut, clip, out, {}, workers);
    const double mpx_s = static_cast<double>(report.pixels) / report.seconds / 1e6;
    const double scaled_100 = report.seconds * 100.0 / std::max(1, frames) * (1920.0 * 1080.0) / (double(width) * height);
    std::printf("frames=%zu written=%zu errors=%zu cores=%u\n", report.frames_total, report.frames_written, report.errors.size(),
                std::max(1u, std::thread::hardware_concurrency()));
    std::printf("seconds=%.3f throughput=%.2f Mpx/s ns_per_px=%.1f est_100x1080p=%.2fs\n", report.seconds, mpx_s,
                1e3 / mpx_s, scaled_100);
    if (!keep) fs::remove_all(root);
    return report.errors.empty() ? 0 : 1;
}
