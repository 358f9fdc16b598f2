#include "cdlgrade/service/config.hpp"

#include <cstdlib>
#include <set>

#include "cdlgrade/error.hpp"
#include "cdlgrade/image_io.hpp"

namespace cdlgrade::service {

namespace fs = std::filesystem;

std::string to_string(BackendMode m) { return m == BackendMode::Live ? "live" : "scripted"; }

BackendMode parse_mode(const std::string& s) {
    if (s == "live") return BackendMode::Live;
    if (s == "scripted") return BackendMode::Scripted;
    fail(ErrorCode::Config, "backend mode must be 'live' or 'scripted', got '" + s + "'");
}

agent::SearchConfig EngineConfig::effective_search() const {
    agent::SearchConfig s = search;
    if (!ablations.tot) {
        s.branching = 1;
        s.max_depth = 1;
        s.beam_width = 1;
    }
    if (!ablations.rag) s.use_rag = false;
    if (!ablations.protected_tones) s.protect_tones = false;
    return s;
}

cdl::LiftMode EngineConfig::lift_mode() const {
    return ablations.adaptive_lift ? cdl::LiftMode::Adaptive : cdl::LiftMode::Offset;
}

void EngineConfig::validate() const {
    agent::validate(search);
    if (mode == BackendMode::Scripted && fixture.empty()) {
        fail(ErrorCode::Config, "scripted mode needs a fixture file (--fixture, LUMI_FIXTURE or \"fixture\" in the config)");
    }
    if (mode == BackendMode::Live) {
        if (llm.url.empty() || vlm.url.empty()) fail(ErrorCode::Config, "live mode needs LUMI_LLM_ENDPOINT and LUMI_VLM_ENDPOINT");
        if (llm.key.empty() || vlm.key.empty()) fail(ErrorCode::Config, "live mode needs LUMI_LLM_KEY and LUMI_VLM_KEY");
    }
    if (embedder != "hashed" && embedder != "http") fail(ErrorCode::Config, "embedder must be 'hashed' or 'http'");
    if (embedder == "http" && embed.url.empty()) fail(ErrorCode::Config, "the http embedder needs LUMI_EMBED_ENDPOINT");
    if (max_iterations < 1) fail(ErrorCode::Config, "max_iterations must be at least 1");
    if (!(rolloff.tau > 0.0 && rolloff.tau < 1.0)) fail(ErrorCode::Config, "rolloff.tau must be in (0, 1)");
    if (!(caps.slight > 0 && caps.slight <= caps.moderate && caps.moderate <= caps.heavy)) {
        fail(ErrorCode::Config, "magnitude caps must satisfy 0 < slight <= moderate <= heavy");
    }
    if (timeout_seconds < 1) fail(ErrorCode::Config, "timeout_seconds must be positive");
}

nlohmann::json to_json(const EngineConfig& c) {
    const auto& s = c.search;
    return {{"mode", to_string(c.mode)},
            {"fixture", c.fixture.string()},
            {"sessions_dir", c.sessions_dir.string()},
            {"store", c.store.string()},
            {"retrieval_rules", c.retrieval_rules.string()},
            {"embedder", c.embedder},
            {"search",
             {{"branching", s.branching},
              {"max_depth", s.max_depth},
              {"beam_width", s.beam_width},
              {"rag_k", s.rag_k},
              {"preview_long_edge", s.preview_long_edge},
              {"max_retries", s.max_retries},
              {"workers", s.workers}}},
            {"rolloff", {{"tau", c.rolloff.tau}, {"enabled", c.rolloff.enabled}}},
            {"magnitude_caps", {{"slight", c.caps.slight}, {"moderate", c.caps.moderate}, {"heavy", c.caps.heavy}}},
            {"max_iterations", c.max_iterations},
            {"allow_degraded", c.allow_degraded},
            {"timeout_seconds", c.timeout_seconds},
            {"ablations",
             {{"tot", c.ablations.tot},
              {"rag", c.ablations.rag},
              {"protected_tones", c.ablations.protected_tones},
              {"adaptive_lift", c.ablations.adaptive_lift},
              {"reflection", c.ablations.reflection}}}};
}

namespace {

void check_keys(const nlohmann::json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) fail(ErrorCode::Config, where + " must be an object");
    for (const auto& [key, value] : obj.items()) {
        if (allowed.count(key)) continue;
        if (key.find("endpoint") != std::string::npos || key.find("key") != std::string::npos || key == "url") {
            fail(ErrorCode::Config, where + ": '" + key + "' is not allowed in config files; endpoints and credentials come from LUMI_* environment variables");
        }
        fail(ErrorCode::Config, where + ": unknown setting '" + key + "'");
    }
}

template <typename T>
void read(const nlohmann::json& obj, const char* key, T& out, const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        fail(ErrorCode::Config, where + "." + key + " has the wrong type");
    }
}

fs::path resolve(const std::string& p, const fs::path& base) {
    if (p.empty()) return {};
    const fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

} // namespace

EngineConfig config_from_json(const nlohmann::json& j, const fs::path& base_dir) {
    check_keys(j,
               {"mode", "fixture", "sessions_dir", "store", "retrieval_rules", "embedder", "search", "rolloff",
                "magnitude_caps", "max_iterations", "allow_degraded", "timeout_seconds", "ablations", "comment"},
               "config");
    EngineConfig c;
    std::string mode = "scripted", fixture, sessions, store, rules;
    read(j, "mode", mode, "config");
    c.mode = parse_mode(mode);
    read(j, "fixture", fixture, "config");
    read(j, "store", store, "config");
    read(j, "retrieval_rules", rules, "config");
    read(j, "embedder", c.embedder, "config");
    c.fixture = resolve(fixture, base_dir);
    c.store = resolve(store, base_dir);
    c.retrieval_rules = resolve(rules, base_dir);
    if (j.contains("sessions_dir")) {
        read(j, "sessions_dir", sessions, "config");
        c.sessions_dir = resolve(sessions, base_dir);
    }
    read(j, "max_iterations", c.max_iterations, "config");
    read(j, "allow_degraded", c.allow_degraded, "config");
    read(j, "timeout_seconds", c.timeout_seconds, "config");
    if (j.contains("search")) {
        const auto& s = j["search"];
        check_keys(s, {"branching", "max_depth", "beam_width", "rag_k", "preview_long_edge", "max_retries", "workers"}, "search");
        read(s, "branching", c.search.branching, "search");
        read(s, "max_depth", c.search.max_depth, "search");
        read(s, "beam_width", c.search.beam_width, "search");
        read(s, "rag_k", c.search.rag_k, "search");
        read(s, "preview_long_edge", c.search.preview_long_edge, "search");
        read(s, "max_retries", c.search.max_retries, "search");
        read(s, "workers", c.search.workers, "search");
    }
    if (j.contains("rolloff")) {
        check_keys(j["rolloff"], {"tau", "enabled"}, "rolloff");
        read(j["rolloff"], "tau", c.rolloff.tau, "rolloff");
        read(j["rolloff"], "enabled", c.rolloff.enabled, "rolloff");
    }
    if (j.contains("magnitude_caps")) {
        check_keys(j["magnitude_caps"], {"slight", "moderate", "heavy"}, "magnitude_caps");
        read(j["magnitude_caps"], "slight", c.caps.slight, "magnitude_caps");
        read(j["magnitude_caps"], "moderate", c.caps.moderate, "magnitude_caps");
        read(j["magnitude_caps"], "heavy", c.caps.heavy, "magnitude_caps");
    }
    if (j.contains("ablations")) {
        const auto& a = j["ablations"];
        check_keys(a, {"tot", "rag", "protected_tones", "adaptive_lift", "reflection"}, "ablations");
        read(a, "tot", c.ablations.tot, "ablations");
        read(a, "rag", c.ablations.rag, "ablations");
        read(a, "protected_tones", c.ablations.protected_tones, "ablations");
        read(a, "adaptive_lift", c.ablations.adaptive_lift, "ablations");
        read(a, "reflection", c.ablations.reflection, "ablations");
    }
    return c;
}

EngineConfig load_config(const fs::path& path) {
    std::string text;
    try {
        text = io::read_text_file(path);
    } catch (const Error& e) {
        fail(ErrorCode::Config, std::string("cannot read config: ") + e.what());
    }
    const auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) fail(ErrorCode::Config, path.string() + " is not valid JSON");
    return config_from_json(j, path.parent_path());
}

EnvLookup process_env() {
    return [](const std::string& name) -> std::optional<std::string> {
        const char* v = std::getenv(name.c_str());
        if (!v || !*v) return std::nullopt;
        return std::string(v);
    };
}

void apply_env(EngineConfig& cfg, const EnvLookup& env) {
    if (auto v = env("LUMI_MODE")) cfg.mode = parse_mode(*v);
    if (auto v = env("LUMI_FIXTURE")) cfg.fixture = *v;
    if (auto v = env("LUMI_SESSIONS_DIR")) cfg.sessions_dir = *v;
    const std::pair<const char*, agent::Endpoint*> endpoints[] = {{"LLM", &cfg.llm}, {"VLM", &cfg.vlm}, {"EMBED", &cfg.embed}};
    for (const auto& [prefix, ep] : endpoints) {
        const std::string p = std::string("LUMI_") + prefix + "_";
        if (auto v = env(p + "ENDPOINT")) ep->url = *v;
        if (auto v = env(p + "KEY")) ep->key = *v;
        if (auto v = env(p + "MODEL")) ep->model = *v;
        ep->timeout_seconds = cfg.timeout_seconds;
    }
    if (!cfg.embed.url.empty() && cfg.embedder == "hashed" && env("LUMI_EMBED_ENDPOINT")) cfg.embedder = "http";
}

} // namespace cdlgrade::service
