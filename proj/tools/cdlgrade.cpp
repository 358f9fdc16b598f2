// cdlgrade command line: session workflows, rendering and the HTTP service.
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"

#include "cdlgrade/color_science.hpp"
#include "cdlgrade/error.hpp"
#include "cdlgrade/frame_stats.hpp"
#include "cdlgrade/image_io.hpp"
#include "cdlgrade/service/engine.hpp"
#include "cdlgrade/service/server.hpp"

namespace fs = std::filesystem;
using namespace cdlgrade;
using namespace cdlgrade::service;

namespace {

HttpService* g_service = nullptr;

void on_signal(int) {
    if (g_service) g_service->stop();
}

struct GlobalOptions {
    std::string config;
    std::string sessions_dir;
    std::string fixture;
    std::string mode;
};

EngineConfig build_config(const GlobalOptions& g) {
    EngineConfig cfg = g.config.empty() ? EngineConfig{} : load_config(g.config);
    apply_env(cfg, process_env());
    if (!g.mode.empty()) cfg.mode = parse_mode(g.mode);
    if (!g.fixture.empty()) cfg.fixture = g.fixture;
    if (!g.sessions_dir.empty()) cfg.sessions_dir = g.sessions_dir;
    return cfg;
}

void print(const nlohmann::json& j) { std::cout << j.dump(2) << "\n"; }

std::optional<int> opt_iteration(int v) { return v < 0 ? std::nullopt : std::optional<int>(v); }

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cdlgrade: agentic CDL grading with .cube export"};
    app.require_subcommand(1);
    GlobalOptions g;
    app.add_option("--config", g.config, "JSON config file");
    app.add_option("--sessions-dir", g.sessions_dir, "Session storage directory");
    app.add_option("--fixture", g.fixture, "Scripted reply fixture");
    app.add_option("--mode", g.mode, "Backend mode")->check(CLI::IsMember({"live", "scripted"}));

    CreateRequest create;
    std::string directive;
    auto* grade = app.add_subcommand("grade", "Create a session from a frame or clip directory and run the base grade");
    grade->add_option("source", create.source, "Frame file or clip directory")->required();
    grade->add_option("--curve", create.curve, "Log curve (slog3, log3g10, logc3, vlog)");
    grade->add_option("--gamut", create.gamut, "Camera gamut");
    grade->add_option("--directive", directive, "Optional style directive");

    std::string session_id, text;
    std::vector<std::string> words;
    auto* feedback = app.add_subcommand("feedback", "Apply one round of director feedback");
    feedback->add_option("session", session_id)->required();
    feedback->add_option("text", words, "Feedback text")->required();

    int iteration = -1;
    std::string out_dir;
    auto* exp = app.add_subcommand("export", "Write .cube, CDL XML and report for an iteration");
    exp->add_option("session", session_id)->required();
    exp->add_option("--iteration", iteration, "Iteration (default: latest)");
    exp->add_option("--out", out_dir, "Also copy the files here");

    std::string clip_dir;
    unsigned workers = 0;
    auto* render = app.add_subcommand("render", "Render a clip directory through a session's LUT");
    render->add_option("session", session_id)->required();
    render->add_option("clip", clip_dir)->required();
    render->add_option("out", out_dir)->required();
    render->add_option("--iteration", iteration, "Iteration (default: latest)");
    render->add_option("--workers", workers, "0 = all cores");

    std::string frame_path;
    bool display = false;
    auto* stats = app.add_subcommand("stats", "Exposure profile of a frame");
    stats->add_option("frame", frame_path)->required();
    stats->add_option("--curve", create.curve);
    stats->add_option("--gamut", create.gamut);
    stats->add_flag("--display", display, "Frame is already Rec.709 display referred");

    std::string host = "127.0.0.1";
    int port = 8080;
    auto* serve = app.add_subcommand("serve", "Run the HTTP session service");
    serve->add_option("--host", host);
    serve->add_option("--port", port)->check(CLI::Range(0, 65535));

    auto* tree = app.add_subcommand("tree", "Print the search tree of a session");
    tree->add_option("session", session_id)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (stats->parsed()) {
            Frame frame;
            if (display) {
                frame = io::read_frame(frame_path, Colorimetry::rec709_display());
            } else {
                const LogCurveId curve = color::parse_log_curve(create.curve);
                const auto& gamut = color::gamut(create.gamut);
                frame = color::normalize(io::read_frame(frame_path, Colorimetry::camera_log(curve, gamut.name)), curve, gamut);
            }
            print({{"frame", frame_path}, {"width", frame.width}, {"height", frame.height},
                   {"exposure", stats::to_json(stats::exposure_profile(frame))}});
            return 0;
        }

        Engine engine(build_config(g));
        if (grade->parsed()) {
            if (!directive.empty()) create.directive = directive;
            const std::string id = engine.create_session(create);
            std::fprintf(stderr, "session %s\n", id.c_str());
            print(engine.grade(id));
        } else if (feedback->parsed()) {
            for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
            print(engine.feedback(session_id, text));
        } else if (exp->parsed()) {
            const auto b = engine.export_artifacts(session_id, opt_iteration(iteration));
            nlohmann::json files{b.cube_path.string(), b.cdl_path.string(), b.report_path.string()};
            if (!out_dir.empty()) {
                fs::create_directories(out_dir);
                files = nlohmann::json::array();
                for (const auto& p : {b.cube_path, b.cdl_path, b.report_path}) {
                    const fs::path dst = fs::path(out_dir) / p.filename();
                    fs::copy_file(p, dst, fs::copy_options::overwrite_existing);
                    files.push_back(dst.string());
                }
            }
            print({{"session_id", session_id}, {"iteration", b.iteration}, {"files", files}});
        } else if (render->parsed()) {
            const auto r = engine.render(session_id, opt_iteration(iteration), clip_dir, out_dir, workers);
            nlohmann::json errors = nlohmann::json::array();
            for (const auto& e : r.errors) {
                errors.push_back({{"frame", e.path.string()}, {"message", e.message}});
                std::fprintf(stderr, "frame %s: %s\n", e.path.string().c_str(), e.message.c_str());
            }
            print({{"frames_total", r.frames_total}, {"frames_written", r.frames_written}, {"pixels", r.pixels},
                   {"seconds", r.seconds}, {"errors", errors}});
            return r.errors.empty() ? 0 : 1;
        } else if (tree->parsed()) {
            print(engine.tree(session_id));
        } else if (serve->parsed()) {
            HttpService service(engine);
            const int bound = service.bind(host, port);
            g_service = &service;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::fprintf(stderr, "listening on http://%s:%d (%s mode, sessions in %s)\n", host.c_str(), bound,
                         to_string(engine.config().mode).c_str(), engine.config().sessions_dir.string().c_str());
            service.listen();
            g_service = nullptr;
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error [%s]: %s\n", std::string(to_string(e.code())).c_str(), e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
