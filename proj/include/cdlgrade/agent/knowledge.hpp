#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cdlgrade/cdl.hpp"

namespace cdlgrade::agent {

class EmbedBackend {
public:
    virtual ~EmbedBackend() = default;
    // Raw vector; callers normalize through embed_text.
    virtual std::vector<double> embed(const std::string& text) = 0;
    virtual std::string identity() const = 0;
};

// Offline embedder: lowercase alphanumeric tokens, FNV-1a hashed into `dim`
// buckets, counted. Deterministic across platforms.
class HashedEmbedder : public EmbedBackend {
public:
    explicit HashedEmbedder(int dim = 256);
    std::vector<double> embed(const std::string& text) override;
    std::string identity() const override;

private:
    int dim_;
};

std::vector<std::string> tokenize(const std::string& text);
std::uint64_t fnv1a64(const std::string& s);

// Unit-norm embedding. Throws DegenerateText for empty text or a zero vector.
std::vector<double> embed_text(const std::string& text, EmbedBackend& backend);

// Partial parameter delta such as "lift.b:+0.02, gain.r:+0.05".
struct ActionHint {
    std::vector<std::pair<std::string, double>> deltas; // canonical paths
    bool seed = false;

    bool operator==(const ActionHint&) const = default;
};

// Throws Parse naming the offending item.
ActionHint parse_action_hint(const std::string& text);
std::string format_action_hint(const ActionHint& hint);
// Adds the deltas; the result is validated (Validation on violation).
cdl::CdlParams apply_hint(const cdl::CdlParams& params, const ActionHint& hint);

struct Heuristic {
    std::string id;
    std::string text;
    std::optional<ActionHint> action_hint;
    std::vector<std::string> tags;
    std::vector<double> embedding;
};

struct HeuristicStore {
    std::vector<Heuristic> entries;
    int embed_dim = 0;
    std::string embedder_id;
};

struct Retrieved {
    Heuristic heuristic;
    double score;
};

// Store file: {"version": 1, "heuristics": [{"id", "text", "action_hint"?,
// "seed"?, "tags"?}]}. Embeddings come from the sidecar `<path>.embeddings.json`
// when present (StaleEmbedding if it was made by another embedder), else are
// computed. Schema problems raise Load with the entry index.
HeuristicStore load_store(const std::filesystem::path& path, EmbedBackend& backend);
HeuristicStore parse_store(const nlohmann::json& doc, EmbedBackend& backend,
                           const std::optional<nlohmann::json>& sidecar = std::nullopt);
// The store shipped in assets/heuristics.json.
HeuristicStore seed_store(EmbedBackend& backend);
nlohmann::json embeddings_sidecar(const HeuristicStore& store);
std::filesystem::path sidecar_path(const std::filesystem::path& store_path);

double cosine(const std::vector<double>& a, const std::vector<double>& b);

// Exhaustive cosine scoring; descending score, ties by ascending id; returns
// min(k, size) entries. Throws EmptyStore / InvalidInput (k < 1).
std::vector<Retrieved> retrieve_topk(const HeuristicStore& store, const std::string& query, int k, EmbedBackend& backend);

std::string format_heuristics(const std::vector<Retrieved>& retrieved);

} // namespace cdlgrade::agent
