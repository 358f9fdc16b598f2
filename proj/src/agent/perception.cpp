#include "cdlgrade/agent/perception.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>

#include <openssl/evp.h>

#include "cdlgrade/error.hpp"
#include "prompt_assets.hpp"

namespace cdlgrade::agent {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

// "Golden Hour" and "golden_hour" name the same mood.
std::string normalize_tag(const std::string& s) {
    std::string out;
    for (char c : lower(s)) {
        if (c == ' ' || c == '-') c = '_';
        if (c == '_' && (out.empty() || out.back() == '_')) continue;
        out.push_back(c);
    }
    while (!out.empty() && out.back() == '_') out.pop_back();
    return out;
}

} // namespace

std::optional<std::string> parse_semantic_analysis(const std::string& reply, SemanticAnalysis& out) {
    nlohmann::json j;
    try {
        j = extract_json(reply);
    } catch (const Error&) {
        return "the reply did not contain a JSON object";
    }
    if (!j.is_object()) return "the reply must be a JSON object";

    SemanticAnalysis s;
    if (!j.contains("lighting_mood") || !j["lighting_mood"].is_string() || j["lighting_mood"].get<std::string>().empty()) {
        return "'lighting_mood' must be a non-empty string";
    }
    s.lighting_mood = j["lighting_mood"].get<std::string>();

    if (!j.contains("narrative") || !j["narrative"].is_object()) return "'narrative' must be an object with 'genre' and 'emotion'";
    for (const char* key : {"genre", "emotion"}) {
        const auto& n = j["narrative"];
        if (n.contains(key) && !n[key].is_string()) return std::string("'narrative.") + key + "' must be a string";
    }
    s.genre = j["narrative"].value("genre", "");
    s.emotion = j["narrative"].value("emotion", "");

    if (j.contains("subjects")) {
        if (!j["subjects"].is_array()) return "'subjects' must be an array of strings";
        for (const auto& v : j["subjects"]) {
            if (!v.is_string()) return "'subjects' must be an array of strings";
            s.subjects.push_back(v.get<std::string>());
        }
    }

    if (j.contains("protected_tones")) {
        const auto& pt = j["protected_tones"];
        if (!pt.is_object()) return "'protected_tones' must map names to [low, high] hue degrees";
        for (const auto& [name, range] : pt.items()) {
            if (!range.is_array() || range.size() != 2 || !range[0].is_number() || !range[1].is_number()) {
                return "protected tone '" + name + "' must be [low, high] in degrees";
            }
            stats::HueRange r{name, range[0].get<double>(), range[1].get<double>()};
            try {
                stats::validate(r);
            } catch (const Error& e) {
                return std::string(e.what());
            }
            s.protected_tones.push_back(std::move(r));
        }
    }
    out = std::move(s);
    return std::nullopt;
}

nlohmann::json to_json(const SemanticAnalysis& s) {
    nlohmann::json tones = nlohmann::json::array();
    for (const auto& r : s.protected_tones) tones.push_back(stats::to_json(r));
    return {{"lighting_mood", s.lighting_mood},
            {"narrative", {{"genre", s.genre}, {"emotion", s.emotion}}},
            {"subjects", s.subjects},
            {"protected_tones", tones}};
}

nlohmann::json to_json(const SceneState& s) {
    return {{"exposure", stats::to_json(s.exposure)},
            {"semantic", to_json(s.semantic)},
            {"anchor", {{"content_hash", s.anchor.content_hash}, {"path", s.anchor.path}}},
            {"degraded", s.degraded},
            {"retry_count", s.retry_count}};
}

SceneState scene_from_json(const nlohmann::json& j) {
    try {
        SceneState s;
        s.exposure = stats::exposure_from_json(j.at("exposure"));
        const auto& sem = j.at("semantic");
        s.semantic.lighting_mood = sem.at("lighting_mood").get<std::string>();
        s.semantic.genre = sem.at("narrative").at("genre").get<std::string>();
        s.semantic.emotion = sem.at("narrative").at("emotion").get<std::string>();
        s.semantic.subjects = sem.at("subjects").get<std::vector<std::string>>();
        for (const auto& r : sem.at("protected_tones")) {
            s.semantic.protected_tones.push_back(
                {r.at("name").get<std::string>(), r.at("low_deg").get<double>(), r.at("high_deg").get<double>()});
        }
        s.anchor.content_hash = j.at("anchor").at("content_hash").get<std::string>();
        s.anchor.path = j.at("anchor").at("path").get<std::string>();
        s.degraded = j.at("degraded").get<bool>();
        s.retry_count = j.at("retry_count").get<int>();
        return s;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Parse, std::string("scene state: ") + e.what());
    }
}

std::string serialize_scene(const SceneState& s) { return to_json(s).dump(2); }

SceneState parse_scene(const std::string& text) {
    const auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) fail(ErrorCode::Parse, "scene state is not valid JSON");
    return scene_from_json(j);
}

std::string sha256_hex(const void* data, std::size_t size) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data, size, digest, &len, EVP_sha256(), nullptr) != 1) fail(ErrorCode::Internal, "sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 15]);
    }
    return out;
}

std::string frame_content_hash(const Frame& frame) {
    std::vector<double> buf;
    buf.reserve(frame.pixels.size() * 3 + 2);
    buf.push_back(frame.width);
    buf.push_back(frame.height);
    for (const auto& p : frame.pixels) buf.insert(buf.end(), p.begin(), p.end());
    return sha256_hex(buf.data(), buf.size() * sizeof(double));
}

SceneState analyze_normalized(const Frame& normalized, ModelBackend& vlm, const PerceptionOptions& options, AnchorRef anchor) {
    if (normalized.colorimetry.encoding != Encoding::Rec709Display) {
        fail(ErrorCode::Internal, "scene analysis must see a normalized frame");
    }
    // Physical stream runs while the analyst is queried.
    auto exposure = std::async(std::launch::async, [&normalized] { return stats::exposure_profile(normalized); });

    const Frame preview = downscale_to_long_edge(normalized, options.preview_long_edge);
    SceneState state;
    state.anchor = std::move(anchor);

    std::string complaint;
    bool ok = false;
    try {
        for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
            ModelRequest req{Role::Analyst,
                             render_template(prompt_template(Role::Analyst),
                                             {{"complaint", complaint.empty() ? "" : "Your previous reply was rejected: " + complaint}}),
                             preview, "scene"};
            const std::string reply = vlm.complete(req);
            SemanticAnalysis parsed;
            if (auto problem = parse_semantic_analysis(reply, parsed)) {
                complaint = *problem;
                continue;
            }
            state.semantic = std::move(parsed);
            state.retry_count = attempt;
            ok = true;
            break;
        }
    } catch (...) {
        exposure.wait();
        throw;
    }
    state.exposure = exposure.get();
    if (!ok) {
        if (!options.allow_degraded) {
            fail(ErrorCode::SemanticFailure, "scene analyst gave " + std::to_string(options.max_retries + 1) +
                                                 " invalid replies; last problem: " + complaint);
        }
        state.degraded = true;
        state.retry_count = options.max_retries;
        state.semantic = SemanticAnalysis{"unknown", "", "", {}, {}};
    }
    return state;
}

SceneState analyze_scene(const Frame& anchor, const color::Chromaticity& gamut, ModelBackend& vlm,
                         const PerceptionOptions& options, const std::string& anchor_path) {
    if (anchor.colorimetry.encoding != Encoding::CameraLog || !anchor.colorimetry.curve) {
        fail(ErrorCode::InvalidInput, "scene analysis expects a camera-log frame, got " + describe(anchor.colorimetry));
    }
    const Frame normalized = color::normalize(anchor, *anchor.colorimetry.curve, gamut);
    return analyze_normalized(normalized, vlm, options, {frame_content_hash(anchor), anchor_path});
}

RetrievalRules RetrievalRules::from_json(const nlohmann::json& j) {
    RetrievalRules r;
    try {
        r.fallback_template = j.value("fallback_template", r.fallback_template);
        r.degraded_query = j.value("degraded_query", r.degraded_query);
        for (const auto& e : j.at("rules")) {
            r.rules.push_back({e.at("mood").get<std::string>(), e.at("genre").get<std::string>(), e.at("query").get<std::string>()});
            if (r.rules.back().query.empty()) fail(ErrorCode::Config, "retrieval rule with an empty query");
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Config, std::string("retrieval rules: ") + e.what());
    }
    return r;
}

RetrievalRules RetrievalRules::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Config, "cannot open retrieval rules " + path.string());
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) fail(ErrorCode::Config, path.string() + " is not valid JSON");
    return from_json(j);
}

const RetrievalRules& RetrievalRules::builtin() {
    static const RetrievalRules rules = from_json(nlohmann::json::parse(assets::kRetrievalRules));
    return rules;
}

std::string build_retrieval_query(const SceneState& state, const std::optional<std::string>& directive, const RetrievalRules& rules) {
    if (directive && !directive->empty()) return *directive;
    if (state.degraded) return rules.degraded_query;

    const std::string mood = normalize_tag(state.semantic.lighting_mood);
    const std::string genre = normalize_tag(state.semantic.genre);
    auto match = [](const std::string& pattern, const std::string& value) { return pattern == "*" || normalize_tag(pattern) == value; };
    for (int pass = 0; pass < 3; ++pass) {
        for (const auto& r : rules.rules) {
            const bool wild_mood = r.mood == "*", wild_genre = r.genre == "*";
            if (pass == 0 && (wild_mood || wild_genre)) continue; // exact pairs
            if (pass == 1 && (wild_mood || !wild_genre)) continue; // mood only
            if (pass == 2 && !wild_mood) continue;                 // genre only
            if (match(r.mood, mood) && match(r.genre, genre)) return r.query;
        }
    }

    std::string subjects;
    for (std::size_t i = 0; i < state.semantic.subjects.size() && i < 2; ++i) {
        subjects += (i == 0 ? ", featuring " : " and ") + state.semantic.subjects[i];
    }
    std::string out = rules.fallback_template;
    if (auto p = out.find("{mood}"); p != std::string::npos) out.replace(p, 6, state.semantic.lighting_mood);
    if (auto p = out.find("{subjects}"); p != std::string::npos) out.replace(p, 10, subjects);
    return out.empty() ? rules.degraded_query : out;
}

} // namespace cdlgrade::agent
