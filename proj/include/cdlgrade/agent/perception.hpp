#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cdlgrade/agent/backend.hpp"
#include "cdlgrade/color_science.hpp"
#include "cdlgrade/frame_stats.hpp"

namespace cdlgrade::agent {

struct SemanticAnalysis {
    std::string lighting_mood;
    std::string genre;
    std::string emotion;
    std::vector<std::string> subjects;
    std::vector<stats::HueRange> protected_tones;

    bool operator==(const SemanticAnalysis&) const = default;
};

struct AnchorRef {
    std::string content_hash; // sha256 hex
    std::string path;

    bool operator==(const AnchorRef&) const = default;
};

struct SceneState {
    stats::ExposureProfile exposure;
    SemanticAnalysis semantic;
    AnchorRef anchor;
    // True when the semantic stream failed and `semantic` holds placeholders.
    bool degraded = false;
    int retry_count = 0;

    bool operator==(const SceneState&) const = default;
};

// Returns the complaint for an invalid analyst reply, or nullopt and fills
// `out`. protected_tones is {"name": [low, high]} in degrees.
std::optional<std::string> parse_semantic_analysis(const std::string& reply, SemanticAnalysis& out);

nlohmann::json to_json(const SemanticAnalysis& s);
nlohmann::json to_json(const SceneState& s);
SceneState scene_from_json(const nlohmann::json& j);
// Canonical document: sorted keys, two-space indent.
std::string serialize_scene(const SceneState& s);
SceneState parse_scene(const std::string& text);

std::string sha256_hex(const void* data, std::size_t size);
std::string frame_content_hash(const Frame& frame);

struct PerceptionOptions {
    int max_retries = 2;
    int preview_long_edge = 768;
    // On three invalid analyst replies: degrade (true) or throw SemanticFailure.
    bool allow_degraded = true;
};

// Normalizes (decode + CST) the camera-log anchor, measures exposure and asks
// the analyst about the normalized frame concurrently.
SceneState analyze_scene(const Frame& anchor, const color::Chromaticity& gamut, ModelBackend& vlm,
                         const PerceptionOptions& options = {}, const std::string& anchor_path = {});

// Same, for an already-normalized display frame.
SceneState analyze_normalized(const Frame& normalized, ModelBackend& vlm, const PerceptionOptions& options,
                              AnchorRef anchor);

struct RetrievalRule {
    std::string mood;  // "*" matches any
    std::string genre; // "*" matches any
    std::string query;
};

struct RetrievalRules {
    std::vector<RetrievalRule> rules;
    std::string fallback_template = "{mood} scene, cinematic grade{subjects}";
    std::string degraded_query = "balanced cinematic grade";

    static RetrievalRules from_json(const nlohmann::json& j);
    static RetrievalRules load(const std::filesystem::path& path);
    // The table shipped in assets/retrieval_rules.json.
    static const RetrievalRules& builtin();
};

// Directive verbatim when given; else the first rule matching (mood, genre)
// with exact pairs before wildcards; else the fallback template.
std::string build_retrieval_query(const SceneState& state, const std::optional<std::string>& directive,
                                  const RetrievalRules& rules = RetrievalRules::builtin());

} // namespace cdlgrade::agent
