#include "cdlgrade/service/engine.hpp"

#include <algorithm>
#include <random>
#include <regex>

#include "cdlgrade/agent/live.hpp"
#include "cdlgrade/agent/perception.hpp"
#include "cdlgrade/agent/reasoning.hpp"
#include "cdlgrade/color_science.hpp"
#include "cdlgrade/error.hpp"
#include "cdlgrade/image_io.hpp"
#include "cdlgrade/params_json.hpp"

namespace cdlgrade::service {

namespace fs = std::filesystem;
using agent::GradingSession;
using agent::SessionStatus;

namespace {

constexpr const char* kSessionFile = "session.json";
constexpr const char* kUngradedFile = "ungraded.png";

std::string new_session_id() {
    static std::mutex mu;
    static std::mt19937_64 rng{std::random_device{}()};
    std::lock_guard lock(mu);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
    return std::string("s") + std::string(buf, 12);
}

bool valid_id(const std::string& id) {
    static const std::regex re("[A-Za-z0-9_-]{1,64}");
    return std::regex_match(id, re);
}

std::string basename_for(const std::string& id, int iteration) { return id + "_iter" + std::to_string(iteration); }

std::string preview_url(const std::string& id, int iteration) {
    return "/sessions/" + id + "/preview?iteration=" + std::to_string(iteration);
}

cdl::RolloffConfig session_rolloff(const GradingSession& s) {
    cdl::RolloffConfig r;
    const auto& j = s.source.at("render");
    r.tau = j.at("rolloff_tau").get<double>();
    r.enabled = j.at("rolloff_enabled").get<bool>();
    return r;
}

cdl::LiftMode session_lift_mode(const GradingSession& s) {
    return s.source.at("render").at("lift_mode").get<std::string>() == "offset" ? cdl::LiftMode::Offset
                                                                                 : cdl::LiftMode::Adaptive;
}

Colorimetry session_colorimetry(const GradingSession& s) {
    return Colorimetry::camera_log(color::parse_log_curve(s.source.at("curve").get<std::string>()),
                                   s.source.at("gamut").get<std::string>());
}

const agent::IterationAudit* search_audit(const GradingSession& s) {
    for (const auto& a : s.audits) {
        if (a.kind == "search") return &a;
    }
    return nullptr;
}

nlohmann::json history_of(const GradingSession& s, bool with_urls) {
    nlohmann::json out = nlohmann::json::array();
    for (int t = 0; t <= s.iteration(); ++t) {
        const auto& params = s.params_history[static_cast<std::size_t>(t)];
        const cdl::CdlParams& prev = t == 0 ? cdl::CdlParams{} : s.params_history[static_cast<std::size_t>(t - 1)];
        nlohmann::json entry{{"iteration", t},
                             {"kind", t == 0 ? "search" : "feedback"},
                             {"feedback", nullptr},
                             {"magnitude", nullptr},
                             {"rationale", nullptr},
                             {"params", cdl::to_json(params)},
                             {"changed_fields", agent::serialization_diff(prev, params)}};
        for (const auto& a : s.audits) {
            if (a.kind != "feedback" || a.iteration != t) continue;
            entry["feedback"] = a.feedback;
            if (a.update) {
                entry["magnitude"] = agent::to_string(a.update->magnitude);
                entry["rationale"] = a.update->rationale;
            }
        }
        if (with_urls) entry["preview_url"] = preview_url(s.id, t);
        out.push_back(std::move(entry));
    }
    return out;
}

nlohmann::json failures_of(const GradingSession& s) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& f : s.failures) out.push_back({{"feedback", f.feedback}, {"error_code", f.error_code}, {"message", f.message}});
    return out;
}

nlohmann::json tree_summary(const GradingSession& s) {
    const auto* audit = search_audit(s);
    if (!audit) return nullptr;
    const auto& t = audit->tree;
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.at("nodes")) {
        nodes.push_back({{"id", n.at("id")},
                         {"parent_id", n.value("parent_id", nlohmann::json())},
                         {"depth", n.at("depth")},
                         {"score", n.value("score", nlohmann::json())},
                         {"critic_failed", n.value("critic_failed", false)}});
    }
    return {{"query", t.at("query")},     {"heuristics", t.at("heuristics")}, {"best_id", t.at("best_id")},
            {"evaluated", t.at("evaluated")}, {"errors", t.at("errors")},     {"nodes", nodes}};
}

} // namespace

int http_status(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidInput:
    case ErrorCode::Validation:
    case ErrorCode::Format:
    case ErrorCode::Truncation:
    case ErrorCode::Parse:
    case ErrorCode::Io:
    case ErrorCode::Config:
    case ErrorCode::DegenerateWhitepoint:
    case ErrorCode::DegenerateText:
    case ErrorCode::InsufficientData:
        return 400;
    case ErrorCode::NotFound:
        return 404;
    case ErrorCode::State:
    case ErrorCode::AlreadyGraded:
        return 409;
    case ErrorCode::ReflectionParse:
    case ErrorCode::SemanticFailure:
    case ErrorCode::SearchFailure:
        return 422;
    case ErrorCode::Backend:
    case ErrorCode::FixtureExhausted:
        return 502;
    default:
        return 500;
    }
}

nlohmann::json error_body(ErrorCode code, const std::string& message) {
    return {{"error", {{"code", std::string(to_string(code))}, {"message", message}}}};
}

Engine::Engine(EngineConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    if (cfg_.mode == BackendMode::Scripted) {
        auto scripted = std::shared_ptr<agent::ScriptedBackend>(agent::ScriptedBackend::from_file(cfg_.fixture));
        scripted_ = scripted.get();
        model_ = std::move(scripted);
        persist_cursor_ = true;
        const fs::path cursor_path = cfg_.sessions_dir / "scripted_cursor.json";
        if (fs::exists(cursor_path)) {
            const auto doc = nlohmann::json::parse(io::read_text_file(cursor_path), nullptr, false);
            if (!doc.is_discarded() && doc.value("fixture", "") == fs::absolute(cfg_.fixture).string()) {
                scripted_->restore_cursor(doc.at("cursor"));
            }
        }
    } else {
        model_ = std::make_shared<agent::HttpChatBackend>(cfg_.llm, cfg_.vlm);
    }
    if (cfg_.embedder == "http") embedder_ = std::make_shared<agent::HttpEmbedBackend>(cfg_.embed);
    else embedder_ = std::make_shared<agent::HashedEmbedder>();
    if (!cfg_.retrieval_rules.empty()) rules_ = agent::RetrievalRules::load(cfg_.retrieval_rules);
}

Engine::Engine(EngineConfig cfg, std::shared_ptr<agent::ModelBackend> model, std::shared_ptr<agent::EmbedBackend> embedder)
    : cfg_(std::move(cfg)), model_(std::move(model)), embedder_(std::move(embedder)) {
    agent::validate(cfg_.search);
    if (!model_) fail(ErrorCode::Config, "engine needs a model backend");
    if (!embedder_) embedder_ = std::make_shared<agent::HashedEmbedder>();
    scripted_ = dynamic_cast<agent::ScriptedBackend*>(model_.get());
    if (!cfg_.retrieval_rules.empty()) rules_ = agent::RetrievalRules::load(cfg_.retrieval_rules);
}

fs::path Engine::session_dir(const std::string& id) const {
    if (!valid_id(id)) fail(ErrorCode::NotFound, "no session '" + id + "'");
    return cfg_.sessions_dir / id;
}

std::mutex& Engine::session_mutex(const std::string& id) {
    std::lock_guard lock(sessions_mu_);
    auto& slot = session_locks_[id];
    if (!slot) slot = std::make_unique<std::mutex>();
    return *slot;
}

void Engine::save(const GradingSession& s) const {
    io::write_file_atomic(session_dir(s.id) / kSessionFile, agent::to_json(s).dump(2) + "\n");
}

GradingSession Engine::load(const std::string& id) const {
    const fs::path path = session_dir(id) / kSessionFile;
    if (!fs::exists(path)) fail(ErrorCode::NotFound, "no session '" + id + "'");
    const auto doc = nlohmann::json::parse(io::read_text_file(path), nullptr, false);
    if (doc.is_discarded()) fail(ErrorCode::Internal, "session file for '" + id + "' is not valid JSON");
    return agent::session_from_json(doc);
}

std::vector<std::string> Engine::list_sessions() const {
    std::vector<std::string> ids;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(cfg_.sessions_dir, ec)) {
        if (entry.is_directory() && fs::exists(entry.path() / kSessionFile)) ids.push_back(entry.path().filename().string());
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

const agent::HeuristicStore* Engine::store() {
    std::lock_guard lock(store_mu_);
    if (!store_) store_ = cfg_.store.empty() ? agent::seed_store(*embedder_) : agent::load_store(cfg_.store, *embedder_);
    return &*store_;
}

void Engine::save_cursor() {
    if (!persist_cursor_ || !scripted_) return;
    std::lock_guard lock(cursor_mu_);
    const nlohmann::json doc{{"fixture", fs::absolute(cfg_.fixture).string()}, {"cursor", scripted_->cursor()}};
    io::write_file_atomic(cfg_.sessions_dir / "scripted_cursor.json", doc.dump(2) + "\n");
}

std::string Engine::create_session(const CreateRequest& req) {
    const LogCurveId curve = color::parse_log_curve(req.curve);
    const auto& gamut = color::gamut(req.gamut);
    if (req.directive && req.directive->find_first_not_of(" \t\r\n") == std::string::npos) {
        fail(ErrorCode::InvalidInput, "directive is empty");
    }
    std::error_code ec;
    if (!fs::exists(req.source, ec)) fail(ErrorCode::Io, "source '" + req.source.string() + "' does not exist");

    const fs::path source = fs::absolute(req.source);
    nlohmann::json info{{"path", source.string()}};
    fs::path anchor = source;
    if (fs::is_directory(source)) {
        const auto frames = io::list_clip_frames(source);
        if (frames.empty()) fail(ErrorCode::Io, "no .png or .ppm frames in " + source.string());
        const std::size_t idx = (frames.size() - 1) / 2;
        anchor = frames[idx];
        info["kind"] = "clip";
        info["frame_count"] = frames.size();
        info["anchor_index"] = idx;
    } else {
        info["kind"] = "frame";
        info["frame_count"] = 1;
        info["anchor_index"] = 0;
    }
    const Frame log = io::read_frame(anchor, Colorimetry::camera_log(curve, gamut.name));
    info["anchor"] = anchor.string();
    info["anchor_hash"] = agent::frame_content_hash(log);
    info["width"] = log.width;
    info["height"] = log.height;
    info["curve"] = std::string(color::log_curve(curve).name);
    info["gamut"] = gamut.name;
    info["render"] = {{"rolloff_tau", cfg_.rolloff.tau},
                      {"rolloff_enabled", cfg_.rolloff.enabled},
                      {"lift_mode", cfg_.lift_mode() == cdl::LiftMode::Offset ? "offset" : "adaptive"}};
    info["ablations"] = to_json(cfg_).at("ablations");

    GradingSession s;
    s.id = new_session_id();
    while (fs::exists(session_dir(s.id))) s.id = new_session_id();
    s.max_iterations = cfg_.max_iterations;
    s.directive = req.directive;
    s.source = std::move(info);

    const Frame preview = agent::EvaluationContext::make_preview(log, gamut, cfg_.search.preview_long_edge);
    fs::create_directories(session_dir(s.id));
    io::write_image(session_dir(s.id) / kUngradedFile, io::quantize(preview, 65535));
    save(s);
    return s.id;
}

Frame Engine::ungraded_preview(const GradingSession& s) const {
    return io::read_frame(session_dir(s.id) / kUngradedFile, Colorimetry::rec709_display());
}

nlohmann::json Engine::grade(const std::string& id) {
    std::lock_guard lock(session_mutex(id));
    GradingSession s = load(id);
    if (s.iteration() >= 0) fail(ErrorCode::AlreadyGraded, "session " + id + " already has a base grade");
    if (s.status != SessionStatus::Active) fail(ErrorCode::State, "session " + id + " is " + agent::to_string(s.status));

    const fs::path anchor = s.source.at("anchor").get<std::string>();
    const Colorimetry colorimetry = session_colorimetry(s);
    const Frame log = io::read_frame(anchor, colorimetry);
    const std::string hash = agent::frame_content_hash(log);
    if (hash != s.source.at("anchor_hash").get<std::string>()) {
        fail(ErrorCode::InvalidInput, "anchor frame " + anchor.string() + " changed since the session was created");
    }

    const agent::SearchConfig search = cfg_.effective_search();
    try {
        const Frame normalized = color::normalize(log, *colorimetry.curve, color::gamut(colorimetry.gamut));
        agent::PerceptionOptions opts;
        opts.max_retries = search.max_retries;
        opts.preview_long_edge = search.preview_long_edge;
        opts.allow_degraded = cfg_.allow_degraded;
        s.scene = agent::analyze_normalized(normalized, *model_, opts, {hash, anchor.string()});

        const agent::EvaluationContext ctx(ungraded_preview(s), *s.scene, s.directive, *model_, search, session_rolloff(s),
                                           session_lift_mode(s));
        const auto& rules = rules_ ? *rules_ : agent::RetrievalRules::builtin();
        const auto result = agent::beam_search(ctx, search.use_rag ? store() : nullptr, embedder_.get(), *model_, rules);
        s.query = result.query;
        s.params_history.push_back(result.best);
        s.audits.push_back({0, "search", "", std::nullopt, agent::to_json(result)});
    } catch (const Error& e) {
        switch (e.code()) {
        case ErrorCode::SemanticFailure:
        case ErrorCode::SearchFailure:
        case ErrorCode::Backend:
        case ErrorCode::FixtureExhausted:
        case ErrorCode::EmptyStore:
        case ErrorCode::StaleEmbedding:
        case ErrorCode::Load:
            s.status = SessionStatus::Failed;
            s.failures.push_back({"", std::string(to_string(e.code())), e.what()});
            save(s);
            save_cursor();
            break;
        default:
            break;
        }
        throw;
    }
    write_preview(s, 0);
    save(s);
    save_cursor();
    return state_of(s);
}

nlohmann::json Engine::feedback(const std::string& id, const std::string& text) {
    if (!cfg_.ablations.reflection) fail(ErrorCode::State, "feedback is disabled (reflection ablation)");
    std::lock_guard lock(session_mutex(id));
    GradingSession s = load(id);
    const auto outcome = agent::run_reflection(s, text, *model_, cfg_.caps, cfg_.search.max_retries);
    if (outcome.failure) {
        save(s);
        save_cursor();
        const ErrorCode code =
            outcome.failure->error_code == to_string(ErrorCode::Backend) ? ErrorCode::Backend : ErrorCode::ReflectionParse;
        fail(code, outcome.failure->message);
    }
    if (outcome.applied) write_preview(s, s.iteration());
    save(s);
    save_cursor();
    if (outcome.approved) export_locked(s, std::nullopt);
    return state_of(s);
}

int Engine::resolve_iteration(const GradingSession& s, std::optional<int> iteration) const {
    if (s.iteration() < 0) fail(ErrorCode::InvalidInput, "session " + s.id + " has not been graded yet");
    const int t = iteration.value_or(s.iteration());
    if (t < 0 || t > s.iteration()) {
        fail(ErrorCode::InvalidInput, "session " + s.id + " has no iteration " + std::to_string(t) + " (latest is " +
                                          std::to_string(s.iteration()) + ")");
    }
    return t;
}

lut::Lut3D Engine::compile(const GradingSession& s, int iteration) const {
    auto lut = lut::compile_lut(s.params_history[static_cast<std::size_t>(iteration)], session_rolloff(s), lut::kDefaultSize,
                                cfg_.search.workers, session_lift_mode(s));
    lut.title = s.id + " iter" + std::to_string(iteration);
    return lut;
}

lut::Lut3D Engine::compile(const std::string& id, std::optional<int> iteration) const {
    const GradingSession s = load(id);
    return compile(s, resolve_iteration(s, iteration));
}

void Engine::write_preview(const GradingSession& s, int iteration) const {
    const Frame graded = lut::apply_lut_trilinear(ungraded_preview(s), compile(s, iteration), cfg_.search.workers);
    const fs::path dir = session_dir(s.id) / "previews";
    fs::create_directories(dir);
    io::write_image(dir / ("iter" + std::to_string(iteration) + ".png"), io::quantize(graded, 255));
}

std::vector<unsigned char> Engine::preview_png(const std::string& id, std::optional<int> iteration,
                                               std::optional<int> long_edge) const {
    if (long_edge && *long_edge < 1) fail(ErrorCode::InvalidInput, "preview size must be positive");
    const GradingSession s = load(id);
    Frame frame;
    if (iteration && *iteration == -1) {
        frame = ungraded_preview(s);
    } else {
        const int t = resolve_iteration(s, iteration);
        const fs::path stored = session_dir(id) / "previews" / ("iter" + std::to_string(t) + ".png");
        if (!long_edge && fs::exists(stored)) return io::encode_png(io::read_image(stored));
        frame = fs::exists(stored) ? io::read_frame(stored, Colorimetry::rec709_display())
                                   : lut::apply_lut_trilinear(ungraded_preview(s), compile(s, t), cfg_.search.workers);
    }
    if (long_edge) frame = downscale_to_long_edge(frame, *long_edge);
    return io::encode_png(io::quantize(frame, 255));
}

ExportBundle Engine::export_locked(const GradingSession& s, std::optional<int> iteration) const {
    ExportBundle b;
    b.iteration = resolve_iteration(s, iteration);
    b.basename = basename_for(s.id, b.iteration);
    const auto& params = s.params_history[static_cast<std::size_t>(b.iteration)];
    const lut::Lut3D lut = compile(s, b.iteration);
    b.cube = lut::to_cube_string(lut);
    b.cdl_xml = lut::export_cdl_xml(params, b.basename);
    const auto render = s.source.at("render");
    b.report = {{"session_id", s.id},
                {"iteration", b.iteration},
                {"latest_iteration", s.iteration()},
                {"status", agent::to_string(s.status)},
                {"mode", s.directive ? "directed" : "automatic"},
                {"directive", s.directive ? nlohmann::json(*s.directive) : nlohmann::json()},
                {"source", s.source},
                {"scene", s.scene ? agent::to_json(*s.scene) : nlohmann::json()},
                {"params", cdl::to_json(params)},
                {"canonical_params", cdl::canonical_serialize(params)},
                {"lut", {{"size", lut.size}, {"title", lut.title}, {"input", "normalized rec709 display values"}}},
                {"history", history_of(s, false)},
                {"search", tree_summary(s)},
                {"failures", failures_of(s)},
                {"files", {{"cube", b.basename + ".cube"}, {"cdl", b.basename + ".cdl"}, {"report", b.basename + "_report.json"}}}};
    const fs::path dir = session_dir(s.id) / "exports";
    b.cube_path = dir / (b.basename + ".cube");
    b.cdl_path = dir / (b.basename + ".cdl");
    b.report_path = dir / (b.basename + "_report.json");
    io::write_file_atomic(b.cube_path, b.cube);
    io::write_file_atomic(b.cdl_path, b.cdl_xml);
    io::write_file_atomic(b.report_path, b.report.dump(2) + "\n");
    return b;
}

ExportBundle Engine::export_artifacts(const std::string& id, std::optional<int> iteration) {
    std::lock_guard lock(session_mutex(id));
    return export_locked(load(id), iteration);
}

nlohmann::json Engine::state_of(const GradingSession& s) const {
    const int t = s.iteration();
    nlohmann::json exports = nullptr;
    if (t >= 0) {
        const std::string q = "?iteration=" + std::to_string(t);
        exports = {{"basename", basename_for(s.id, t)},
                   {"cube", "/sessions/" + s.id + "/export/cube" + q},
                   {"cdl", "/sessions/" + s.id + "/export/cdl" + q},
                   {"report", "/sessions/" + s.id + "/export/report" + q}};
    }
    return {{"id", s.id},
            {"status", agent::to_string(s.status)},
            {"iteration", t},
            {"max_iterations", s.max_iterations},
            {"accepts_feedback", s.status == SessionStatus::Active && t >= 0 && cfg_.ablations.reflection},
            {"mode", s.directive ? "directed" : "automatic"},
            {"directive", s.directive ? nlohmann::json(*s.directive) : nlohmann::json()},
            {"source", s.source},
            {"scene", s.scene ? agent::to_json(*s.scene) : nlohmann::json()},
            {"degraded", s.scene ? s.scene->degraded : false},
            {"query", s.query},
            {"params", t >= 0 ? cdl::to_json(s.params_history.back()) : nlohmann::json()},
            {"history", history_of(s, true)},
            {"failures", failures_of(s)},
            {"ungraded_preview_url", preview_url(s.id, -1)},
            {"preview_url", t >= 0 ? nlohmann::json(preview_url(s.id, t)) : nlohmann::json()},
            {"exports", exports}};
}

nlohmann::json Engine::state(const std::string& id) const { return state_of(load(id)); }

nlohmann::json Engine::tree(const std::string& id) const {
    const GradingSession s = load(id);
    const auto* audit = search_audit(s);
    if (!audit) fail(ErrorCode::State, "session " + id + " has no search tree yet");
    nlohmann::json t = audit->tree;
    t["session_id"] = s.id;
    return t;
}

render::ClipReport Engine::render(const std::string& id, std::optional<int> iteration, const fs::path& clip_dir,
                                  const fs::path& out_dir, unsigned workers) const {
    const GradingSession s = load(id);
    const lut::Lut3D lut = compile(s, resolve_iteration(s, iteration));
    render::Source src;
    src.curve = color::parse_log_curve(s.source.at("curve").get<std::string>());
    src.gamut = s.source.at("gamut").get<std::string>();
    return render::render_clip(lut, clip_dir, out_dir, src, workers);
}

} // namespace cdlgrade::service
