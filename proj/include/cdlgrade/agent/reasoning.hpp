#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cdlgrade/agent/backend.hpp"
#include "cdlgrade/agent/knowledge.hpp"
#include "cdlgrade/agent/perception.hpp"
#include "cdlgrade/cdl.hpp"
#include "cdlgrade/frame_stats.hpp"

namespace cdlgrade::agent {

struct SearchConfig {
    int branching = 3;
    int max_depth = 2;
    int beam_width = 2;
    int rag_k = 3;
    int preview_long_edge = 768;
    int max_retries = 2;
    unsigned workers = 0; // 0: hardware concurrency
    bool use_rag = true;
    bool protect_tones = true;
};

// Throws Config when a field is < 1.
void validate(const SearchConfig& cfg);

struct ToTNode {
    int id = 0;
    int depth = 0;
    cdl::CdlParams params;
    std::string rationale;
    std::optional<double> score;
    std::optional<int> parent_id;
    std::string critique;
    bool critic_failed = false;
    std::optional<stats::ProtectedToneReport> tones;
};

nlohmann::json to_json(const ToTNode& node);
ToTNode node_from_json(const nlohmann::json& j);

struct ExpansionResult {
    std::vector<ToTNode> children; // ids left at 0; the caller assigns them
    int retries = 0;
    std::optional<std::string> error;
};

// Parses an expander reply relative to the parent params. Returns the
// complaint when the reply is unusable.
std::optional<std::string> parse_candidates(const std::string& reply, const cdl::CdlParams& parent, int branching,
                                            std::vector<std::pair<cdl::CdlParams, std::string>>& out);

ExpansionResult expand_node(const ToTNode& node, const SceneState& scene, const std::vector<Retrieved>& heuristics,
                            const std::optional<std::string>& directive, ModelBackend& expander, const SearchConfig& cfg);

// Everything evaluation needs besides the node: the ungraded normalized
// preview plus backends and render settings. Rendered previews are cached by
// canonical params.
class EvaluationContext {
public:
    EvaluationContext(Frame ungraded_preview, SceneState scene, std::optional<std::string> directive, ModelBackend& critic,
                      SearchConfig cfg, cdl::RolloffConfig rolloff = {}, cdl::LiftMode lift_mode = cdl::LiftMode::Adaptive);

    // Normalizes a camera-log anchor and downscales it.
    static Frame make_preview(const Frame& anchor, const color::Chromaticity& gamut, int long_edge);

    std::shared_ptr<const Frame> render(const cdl::CdlParams& params) const;

    const Frame& ungraded() const { return ungraded_; }
    const SceneState& scene() const { return scene_; }
    const std::optional<std::string>& directive() const { return directive_; }
    ModelBackend& critic() const { return critic_; }
    const SearchConfig& config() const { return cfg_; }
    const cdl::RolloffConfig& rolloff() const { return rolloff_; }
    cdl::LiftMode lift_mode() const { return lift_mode_; }

private:
    Frame ungraded_;
    SceneState scene_;
    std::optional<std::string> directive_;
    ModelBackend& critic_;
    SearchConfig cfg_;
    cdl::RolloffConfig rolloff_;
    cdl::LiftMode lift_mode_;
    mutable std::mutex cache_mu_;
    mutable std::map<std::string, std::shared_ptr<const Frame>> cache_;
};

// Returns the complaint, or nullopt and fills score/critique. Scores must be
// numbers in [1, 5].
std::optional<std::string> parse_critique(const std::string& reply, double& score, std::string& critique);

// Renders the node's grade on the preview, audits protected tones and asks the
// critic. A critic that fails validation after the retries scores 1.0.
void evaluate_candidate(ToTNode& node, const EvaluationContext& ctx);

struct SearchResult {
    cdl::CdlParams best;
    int best_id = 0;
    std::vector<ToTNode> tree;
    std::string query;
    std::vector<Retrieved> heuristics;
    std::vector<std::string> errors;
    int evaluated = 0;
};

nlohmann::json to_json(const SearchResult& r);

// Bound on evaluated nodes for a config: b + b*beam*(D-1).
int max_evaluated_nodes(const SearchConfig& cfg);

SearchResult beam_search(const EvaluationContext& ctx, const HeuristicStore* store, EmbedBackend* embedder,
                         ModelBackend& expander, const RetrievalRules& rules = RetrievalRules::builtin());

} // namespace cdlgrade::agent
