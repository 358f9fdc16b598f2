#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "json.hpp"

#include "cdlgrade/agent/live.hpp"
#include "cdlgrade/agent/reasoning.hpp"
#include "cdlgrade/agent/reflection.hpp"
#include "cdlgrade/cdl.hpp"

namespace cdlgrade::service {

enum class BackendMode { Scripted, Live };

std::string to_string(BackendMode m);
BackendMode parse_mode(const std::string& s);

// Switches for the ablation variants. Defaults are the full pipeline.
struct Ablations {
    bool tot = true;             // false: one candidate, one level
    bool rag = true;             // false: no heuristic retrieval
    bool protected_tones = true; // false: no tone audit in the critic prompt
    bool adaptive_lift = true;   // false: plain offset lift
    bool reflection = true;      // false: feedback is refused

    bool operator==(const Ablations&) const = default;
};

struct EngineConfig {
    BackendMode mode = BackendMode::Scripted;
    std::filesystem::path fixture;      // scripted replies
    std::filesystem::path sessions_dir = "sessions";
    std::filesystem::path store;        // empty: compiled-in seed store
    std::filesystem::path retrieval_rules; // empty: compiled-in table
    std::string embedder = "hashed";    // "hashed" or "http"

    // Live transport; only ever filled from the environment.
    agent::Endpoint llm;
    agent::Endpoint vlm;
    agent::Endpoint embed;
    int timeout_seconds = 120;

    agent::SearchConfig search;
    cdl::RolloffConfig rolloff;
    agent::MagnitudeCaps caps;
    int max_iterations = 5;
    bool allow_degraded = true;
    Ablations ablations;

    // Search settings after ablations.
    agent::SearchConfig effective_search() const;
    cdl::LiftMode lift_mode() const;

    // Throws Config when a required piece is missing or a value is out of range.
    void validate() const;
};

nlohmann::json to_json(const EngineConfig& cfg); // never includes keys

// Config file fields (all optional). Relative paths resolve against
// `base_dir`. Endpoints and credentials are rejected here: they come from the
// environment only.
EngineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
EngineConfig load_config(const std::filesystem::path& path);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

// LUMI_MODE, LUMI_FIXTURE, LUMI_SESSIONS_DIR, LUMI_{LLM,VLM,EMBED}_{ENDPOINT,KEY,MODEL}.
void apply_env(EngineConfig& cfg, const EnvLookup& env);

} // namespace cdlgrade::service
