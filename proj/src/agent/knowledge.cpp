#include "cdlgrade/agent/knowledge.hpp"

#include <algorithm>
#include <charconv>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "cdlgrade/error.hpp"
#include "prompt_assets.hpp"

namespace cdlgrade::agent {

HashedEmbedder::HashedEmbedder(int dim) : dim_(dim) {
    if (dim < 1) fail(ErrorCode::Config, "embedding dimension must be positive");
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::vector<double> HashedEmbedder::embed(const std::string& text) {
    std::vector<double> v(static_cast<std::size_t>(dim_), 0.0);
    for (const auto& t : tokenize(text)) v[fnv1a64(t) % static_cast<std::uint64_t>(dim_)] += 1.0;
    return v;
}

std::string HashedEmbedder::identity() const { return "hashed-bow-fnv1a-" + std::to_string(dim_); }

std::vector<double> embed_text(const std::string& text, EmbedBackend& backend) {
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) fail(ErrorCode::DegenerateText, "cannot embed empty text");
    std::vector<double> v = backend.embed(text);
    double norm2 = 0.0;
    for (double x : v) {
        if (!std::isfinite(x)) fail(ErrorCode::Backend, "embedding backend returned a non-finite value");
        norm2 += x * x;
    }
    if (norm2 <= 0.0) fail(ErrorCode::DegenerateText, "text '" + text + "' has no embeddable tokens");
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : v) x *= inv;
    return v;
}

ActionHint parse_action_hint(const std::string& text) {
    ActionHint hint;
    std::stringstream ss(text);
    std::string item;
    std::set<std::string> seen;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        const auto e = item.find_last_not_of(" \t");
        item = item.substr(b, e - b + 1);
        const auto colon = item.find(':');
        if (colon == std::string::npos) fail(ErrorCode::Parse, "action hint item '" + item + "' lacks ':'");
        std::string field = item.substr(0, colon);
        std::string value = item.substr(colon + 1);
        while (!field.empty() && field.back() == ' ') field.pop_back();
        value.erase(0, value.find_first_not_of(' '));
        const auto path = cdl::canonical_field(field);
        if (!path) fail(ErrorCode::Parse, "action hint names unknown parameter '" + field + "'");
        if (!seen.insert(*path).second) fail(ErrorCode::Parse, "action hint repeats '" + *path + "'");
        if (!value.empty() && value[0] == '+') value.erase(0, 1);
        double delta = 0.0;
        const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), delta);
        if (ec != std::errc() || ptr != value.data() + value.size() || !std::isfinite(delta)) {
            fail(ErrorCode::Parse, "action hint value '" + item.substr(colon + 1) + "' is not a number");
        }
        hint.deltas.emplace_back(*path, delta);
    }
    if (hint.deltas.empty()) fail(ErrorCode::Parse, "empty action hint");
    return hint;
}

std::string format_action_hint(const ActionHint& hint) {
    std::string out;
    for (const auto& [path, d] : hint.deltas) {
        if (!out.empty()) out += ", ";
        std::ostringstream v;
        v << (d >= 0 ? "+" : "") << d;
        out += path + ":" + v.str();
    }
    return out;
}

cdl::CdlParams apply_hint(const cdl::CdlParams& params, const ActionHint& hint) {
    cdl::CdlParams out = params;
    for (const auto& [path, d] : hint.deltas) cdl::set_field(out, path, cdl::get_field(out, path) + d);
    cdl::require_valid(out);
    return out;
}

std::filesystem::path sidecar_path(const std::filesystem::path& store_path) {
    return store_path.string() + ".embeddings.json";
}

HeuristicStore parse_store(const nlohmann::json& doc, EmbedBackend& backend, const std::optional<nlohmann::json>& sidecar) {
    if (!doc.is_object() || !doc.contains("heuristics") || !doc["heuristics"].is_array()) {
        fail(ErrorCode::Load, "heuristic store needs a 'heuristics' array");
    }
    HeuristicStore store;
    store.embedder_id = backend.identity();

    const nlohmann::json* vectors = nullptr;
    if (sidecar) {
        const std::string stored = sidecar->value("embedder_id", "");
        if (stored != store.embedder_id) {
            fail(ErrorCode::StaleEmbedding,
                 "stored embeddings were made by '" + stored + "', configured embedder is '" + store.embedder_id + "'");
        }
        if (sidecar->contains("vectors")) vectors = &(*sidecar)["vectors"];
    }

    std::set<std::string> ids;
    std::size_t index = 0;
    for (const auto& e : doc["heuristics"]) {
        const std::string where = "heuristic #" + std::to_string(index);
        auto text_field = [&](const char* key) -> std::string {
            if (!e.contains(key) || !e[key].is_string() || e[key].get<std::string>().empty()) {
                fail(ErrorCode::Load, where + ": '" + key + "' must be a non-empty string");
            }
            return e[key].get<std::string>();
        };
        if (!e.is_object()) fail(ErrorCode::Load, where + ": entry must be an object");
        Heuristic h;
        h.id = text_field("id");
        h.text = text_field("text");
        if (!ids.insert(h.id).second) fail(ErrorCode::Load, where + ": duplicate id '" + h.id + "'");
        if (e.contains("action_hint")) {
            try {
                h.action_hint = parse_action_hint(text_field("action_hint"));
            } catch (const Error& err) {
                fail(ErrorCode::Load, where + " ('" + h.id + "'): " + err.what());
            }
            h.action_hint->seed = e.value("seed", false);
        } else if (e.value("seed", false)) {
            fail(ErrorCode::Load, where + " ('" + h.id + "'): seed flag without an action_hint");
        }
        if (e.contains("tags")) {
            if (!e["tags"].is_array()) fail(ErrorCode::Load, where + ": 'tags' must be an array");
            for (const auto& t : e["tags"]) {
                if (!t.is_string()) fail(ErrorCode::Load, where + ": tags must be strings");
                h.tags.push_back(t.get<std::string>());
            }
        }
        if (vectors && vectors->contains(h.id)) {
            h.embedding = (*vectors)[h.id].get<std::vector<double>>();
        } else {
            h.embedding = embed_text(h.text, backend);
        }
        if (store.embed_dim == 0) store.embed_dim = static_cast<int>(h.embedding.size());
        if (static_cast<int>(h.embedding.size()) != store.embed_dim) {
            fail(ErrorCode::StaleEmbedding, where + ": embedding dimension " + std::to_string(h.embedding.size()) +
                                                " differs from " + std::to_string(store.embed_dim));
        }
        double n2 = 0.0;
        for (double x : h.embedding) n2 += x * x;
        if (std::abs(std::sqrt(n2) - 1.0) > 1e-6) fail(ErrorCode::StaleEmbedding, where + ": stored embedding is not unit norm");
        store.entries.push_back(std::move(h));
        ++index;
    }
    return store;
}

HeuristicStore load_store(const std::filesystem::path& path, EmbedBackend& backend) {
    auto read_json = [](const std::filesystem::path& p) {
        std::ifstream in(p);
        if (!in) fail(ErrorCode::Load, "cannot open " + p.string());
        try {
            return nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::Load, p.string() + ": " + e.what());
        }
    };
    const nlohmann::json doc = read_json(path);
    std::optional<nlohmann::json> sidecar;
    if (std::filesystem::exists(sidecar_path(path))) sidecar = read_json(sidecar_path(path));
    return parse_store(doc, backend, sidecar);
}

nlohmann::json embeddings_sidecar(const HeuristicStore& store) {
    nlohmann::json vectors = nlohmann::json::object();
    for (const auto& h : store.entries) vectors[h.id] = h.embedding;
    return {{"embedder_id", store.embedder_id}, {"dim", store.embed_dim}, {"vectors", vectors}};
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) fail(ErrorCode::StaleEmbedding, "embedding dimensions differ");
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    return std::clamp(dot, -1.0, 1.0);
}

std::vector<Retrieved> retrieve_topk(const HeuristicStore& store, const std::string& query, int k, EmbedBackend& backend) {
    if (store.entries.empty()) fail(ErrorCode::EmptyStore, "heuristic store is empty");
    if (k < 1) fail(ErrorCode::InvalidInput, "k must be at least 1");
    const std::vector<double> q = embed_text(query, backend);

    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(store.entries.size());
    for (std::size_t i = 0; i < store.entries.size(); ++i) scored.emplace_back(cosine(q, store.entries[i].embedding), i);
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(k), scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return store.entries[a.second].id < store.entries[b.second].id;
    });
    std::vector<Retrieved> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({store.entries[scored[i].second], scored[i].first});
    return out;
}

std::string format_heuristics(const std::vector<Retrieved>& retrieved) {
    if (retrieved.empty()) return "(none)";
    std::string out;
    int n = 1;
    for (const auto& r : retrieved) {
        out += std::to_string(n++) + ". " + r.heuristic.text;
        if (r.heuristic.action_hint) out += " [Action: " + format_action_hint(*r.heuristic.action_hint) + "]";
        out += "\n";
    }
    return out;
}

HeuristicStore seed_store(EmbedBackend& backend) {
    return parse_store(nlohmann::json::parse(assets::kSeedHeuristics), backend);
}

} // namespace cdlgrade::agent
