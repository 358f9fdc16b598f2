#include "cdlgrade/agent/reasoning.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cdlgrade/error.hpp"
#include "cdlgrade/lut.hpp"
#include "cdlgrade/parallel.hpp"
#include "cdlgrade/params_json.hpp"

namespace cdlgrade::agent {

namespace {

constexpr const char* kChannels[] = {"red", "green", "blue"};

std::string num(double v) {
    std::ostringstream s;
    s << v;
    return s.str();
}

// Sets one candidate entry. Accepts canonical paths, aliases, and the group
// keys lift/gamma/gain with a number (all channels) or a 3-array.
std::optional<std::string> assign(cdl::CdlParams& p, const std::string& key, const nlohmann::json& value, bool delta) {
    auto put = [&](const std::string& path, const nlohmann::json& v) -> std::optional<std::string> {
        if (!v.is_number() || !std::isfinite(v.get<double>())) return "'" + key + "' must be a finite number";
        const double x = v.get<double>();
        cdl::set_field(p, path, delta ? cdl::get_field(p, path) + x : x);
        return std::nullopt;
    };
    if (key == "lift" || key == "gamma" || key == "gain") {
        for (int c = 0; c < 3; ++c) {
            const nlohmann::json& v = value.is_array() ? (value.size() == 3 ? value[static_cast<std::size_t>(c)] : nlohmann::json()) : value;
            if (auto err = put(key + "." + kChannels[c], v)) return err;
        }
        return std::nullopt;
    }
    const auto path = cdl::canonical_field(key);
    if (!path) return "unknown parameter '" + key + "'";
    return put(*path, value);
}

std::string tone_report_text(const std::optional<stats::ProtectedToneReport>& report) {
    if (!report) return "(not audited)";
    return stats::to_json(*report).dump(2);
}

bool ranks_before(const ToTNode& a, const ToTNode& b) {
    const double sa = a.score.value_or(-1.0), sb = b.score.value_or(-1.0);
    if (sa != sb) return sa > sb;
    return a.id < b.id;
}

} // namespace

void validate(const SearchConfig& cfg) {
    for (auto [name, v] : {std::pair{"branching", cfg.branching}, {"max_depth", cfg.max_depth}, {"beam_width", cfg.beam_width},
                           {"rag_k", cfg.rag_k}, {"preview_long_edge", cfg.preview_long_edge}}) {
        if (v < 1) fail(ErrorCode::Config, std::string("search config '") + name + "' must be at least 1");
    }
    if (cfg.max_retries < 0) fail(ErrorCode::Config, "search config 'max_retries' must be non-negative");
}

nlohmann::json to_json(const ToTNode& n) {
    nlohmann::json j{{"id", n.id},
                     {"depth", n.depth},
                     {"params", cdl::to_json(n.params)},
                     {"rationale", n.rationale},
                     {"score", n.score ? nlohmann::json(*n.score) : nlohmann::json()},
                     {"parent_id", n.parent_id ? nlohmann::json(*n.parent_id) : nlohmann::json()},
                     {"critique", n.critique},
                     {"critic_failed", n.critic_failed}};
    if (n.tones) j["tones"] = stats::to_json(*n.tones)["protected_tones"];
    return j;
}

ToTNode node_from_json(const nlohmann::json& j) {
    ToTNode n;
    n.id = j.at("id").get<int>();
    n.depth = j.at("depth").get<int>();
    n.params = cdl::params_from_json(j.at("params"));
    n.rationale = j.at("rationale").get<std::string>();
    if (!j.at("score").is_null()) n.score = j["score"].get<double>();
    if (!j.at("parent_id").is_null()) n.parent_id = j["parent_id"].get<int>();
    n.critique = j.value("critique", "");
    n.critic_failed = j.value("critic_failed", false);
    if (j.contains("tones")) {
        stats::ProtectedToneReport r;
        for (const auto& t : j["tones"]) {
            stats::ToneShift s;
            s.name = t.at("name").get<std::string>();
            s.pixel_count = t.at("pixel_count").get<std::size_t>();
            s.mean_abs_hue_shift_deg = t.at("mean_abs_hue_shift_deg").get<double>();
            s.max_abs_hue_shift_deg = t.at("max_abs_hue_shift_deg").get<double>();
            s.mean_saturation_ratio = t.at("mean_saturation_ratio").get<double>();
            s.empty = t.at("empty").get<bool>();
            r.ranges.push_back(std::move(s));
        }
        n.tones = std::move(r);
    }
    return n;
}

std::optional<std::string> parse_candidates(const std::string& reply, const cdl::CdlParams& parent, int branching,
                                            std::vector<std::pair<cdl::CdlParams, std::string>>& out) {
    nlohmann::json j;
    try {
        j = extract_json(reply);
    } catch (const Error&) {
        return "the reply did not contain JSON";
    }
    const nlohmann::json* list = &j;
    if (j.is_object()) {
        if (!j.contains("candidates")) return "missing 'candidates' array";
        list = &j["candidates"];
    }
    if (!list->is_array()) return "'candidates' must be an array";
    if (static_cast<int>(list->size()) != branching) {
        return "expected exactly " + std::to_string(branching) + " candidates, got " + std::to_string(list->size());
    }
    std::vector<std::pair<cdl::CdlParams, std::string>> parsed;
    int index = 1;
    for (const auto& c : *list) {
        const std::string where = "candidate " + std::to_string(index++);
        if (!c.is_object()) return where + " must be an object";
        const bool has_delta = c.contains("delta"), has_params = c.contains("params");
        if (has_delta == has_params) return where + " needs exactly one of 'delta' or 'params'";
        const auto& body = has_delta ? c["delta"] : c["params"];
        if (!body.is_object()) return where + ": '" + (has_delta ? "delta" : "params") + "' must be an object";
        if (!c.contains("rationale") || !c["rationale"].is_string()) return where + " needs a 'rationale' string";
        cdl::CdlParams p = parent;
        for (const auto& [key, value] : body.items()) {
            if (auto err = assign(p, key, value, has_delta)) return where + ": " + *err;
        }
        const auto violations = cdl::validate_params(p);
        if (!violations.empty()) {
            std::string msg = where + " is out of range:";
            for (const auto& v : violations) msg += " " + v.field + " = " + num(v.value) + " not in " + v.bounds + ";";
            return msg;
        }
        parsed.emplace_back(p, c["rationale"].get<std::string>());
    }
    out = std::move(parsed);
    return std::nullopt;
}

ExpansionResult expand_node(const ToTNode& node, const SceneState& scene, const std::vector<Retrieved>& heuristics,
                            const std::optional<std::string>& directive, ModelBackend& expander, const SearchConfig& cfg) {
    if (node.depth >= cfg.max_depth) fail(ErrorCode::Internal, "expand_node past max depth");
    ExpansionResult result;
    std::string complaint;
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        const std::string prompt = render_template(
            prompt_template(Role::Expander),
            {{"branching", std::to_string(cfg.branching)},
             {"scene_state", serialize_scene(scene)},
             {"heuristics", format_heuristics(heuristics)},
             {"directive", directive.value_or("none")},
             {"parent_params", cdl::canonical_serialize(node.params)},
             {"parent_rationale", node.rationale.empty() ? "(root)" : node.rationale},
             {"complaint", complaint.empty() ? "" : "Your previous reply was rejected: " + complaint}});
        const std::string reply = expander.complete({Role::Expander, prompt, std::nullopt, "expand-" + std::to_string(node.id)});
        std::vector<std::pair<cdl::CdlParams, std::string>> candidates;
        if (auto problem = parse_candidates(reply, node.params, cfg.branching, candidates)) {
            complaint = *problem;
            result.retries = attempt;
            continue;
        }
        for (auto& [params, rationale] : candidates) {
            ToTNode child;
            child.depth = node.depth + 1;
            child.parent_id = node.id;
            child.params = params;
            child.rationale = std::move(rationale);
            result.children.push_back(std::move(child));
        }
        result.retries = attempt;
        return result;
    }
    result.error = "expander gave " + std::to_string(cfg.max_retries + 1) + " invalid replies for node " +
                   std::to_string(node.id) + "; last problem: " + complaint;
    return result;
}

EvaluationContext::EvaluationContext(Frame ungraded_preview, SceneState scene, std::optional<std::string> directive,
                                     ModelBackend& critic, SearchConfig cfg, cdl::RolloffConfig rolloff, cdl::LiftMode lift_mode)
    : ungraded_(std::move(ungraded_preview)), scene_(std::move(scene)), directive_(std::move(directive)), critic_(critic),
      cfg_(cfg), rolloff_(rolloff), lift_mode_(lift_mode) {
    validate(cfg_);
    if (ungraded_.colorimetry.encoding != Encoding::Rec709Display) {
        fail(ErrorCode::InvalidInput, "evaluation needs a normalized preview, got " + describe(ungraded_.colorimetry));
    }
}

Frame EvaluationContext::make_preview(const Frame& anchor, const color::Chromaticity& gamut, int long_edge) {
    if (anchor.colorimetry.encoding != Encoding::CameraLog || !anchor.colorimetry.curve) {
        fail(ErrorCode::InvalidInput, "preview source must be a camera-log frame, got " + describe(anchor.colorimetry));
    }
    return downscale_to_long_edge(color::normalize(anchor, *anchor.colorimetry.curve, gamut), long_edge);
}

std::shared_ptr<const Frame> EvaluationContext::render(const cdl::CdlParams& params) const {
    const std::string key = cdl::canonical_serialize(params);
    {
        std::lock_guard lock(cache_mu_);
        if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    const lut::Lut3D proxy = lut::compile_lut(params, rolloff_, lut::kDefaultSize, 1, lift_mode_);
    auto frame = std::make_shared<const Frame>(lut::apply_lut_trilinear(ungraded_, proxy, 1));
    std::lock_guard lock(cache_mu_);
    return cache_.emplace(key, std::move(frame)).first->second;
}

std::optional<std::string> parse_critique(const std::string& reply, double& score, std::string& critique) {
    nlohmann::json j;
    try {
        j = extract_json(reply);
    } catch (const Error&) {
        return "the reply did not contain a JSON object";
    }
    if (!j.is_object() || !j.contains("score")) return "missing 'score'";
    double s = 0.0;
    if (j["score"].is_number()) {
        s = j["score"].get<double>();
    } else if (j["score"].is_string()) {
        try {
            std::size_t used = 0;
            const std::string text = j["score"].get<std::string>();
            s = std::stod(text, &used);
            if (used != text.size()) return "'score' must be a number";
        } catch (const std::exception&) {
            return "'score' must be a number";
        }
    } else {
        return "'score' must be a number";
    }
    if (!(s >= 1.0 && s <= 5.0)) return "'score' must be between 1 and 5, got " + num(s);
    score = s;
    critique = j.contains("critique") && j["critique"].is_string() ? j["critique"].get<std::string>() : "";
    return std::nullopt;
}

void evaluate_candidate(ToTNode& node, const EvaluationContext& ctx) {
    if (node.score) fail(ErrorCode::Internal, "node " + std::to_string(node.id) + " already evaluated");
    cdl::require_valid(node.params);
    const std::shared_ptr<const Frame> preview = ctx.render(node.params);

    const auto& tones = ctx.scene().semantic.protected_tones;
    if (ctx.config().protect_tones) node.tones = stats::protected_tone_shift(ctx.ungraded(), *preview, tones);

    std::string complaint;
    for (int attempt = 0; attempt <= ctx.config().max_retries; ++attempt) {
        const std::string prompt = render_template(
            prompt_template(Role::Critic),
            {{"scene_state", serialize_scene(ctx.scene())},
             {"tone_report", tone_report_text(node.tones)},
             {"directive", ctx.directive().value_or("none")},
             {"complaint", complaint.empty() ? "" : "Your previous reply was rejected: " + complaint}});
        std::string reply;
        try {
            reply = ctx.critic().complete({Role::Critic, prompt, *preview, "node-" + std::to_string(node.id)});
        } catch (const Error& e) {
            if (e.code() != ErrorCode::Backend) throw;
            complaint = e.what();
            continue;
        }
        double score = 0.0;
        std::string critique;
        if (auto problem = parse_critique(reply, score, critique)) {
            complaint = *problem;
            continue;
        }
        node.score = score;
        node.critique = std::move(critique);
        return;
    }
    node.score = 1.0;
    node.critic_failed = true;
    node.critique = "critic failure: " + complaint;
}

int max_evaluated_nodes(const SearchConfig& cfg) {
    return cfg.branching + cfg.branching * cfg.beam_width * (cfg.max_depth - 1);
}

nlohmann::json to_json(const SearchResult& r) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : r.tree) nodes.push_back(to_json(n));
    nlohmann::json heuristics = nlohmann::json::array();
    for (const auto& h : r.heuristics) heuristics.push_back({{"id", h.heuristic.id}, {"score", h.score}, {"text", h.heuristic.text}});
    return {{"query", r.query}, {"heuristics", heuristics}, {"nodes", nodes},
            {"best_id", r.best_id}, {"evaluated", r.evaluated}, {"errors", r.errors}};
}

SearchResult beam_search(const EvaluationContext& ctx, const HeuristicStore* store, EmbedBackend* embedder,
                         ModelBackend& expander, const RetrievalRules& rules) {
    const SearchConfig& cfg = ctx.config();
    SearchResult res;
    res.query = build_retrieval_query(ctx.scene(), ctx.directive(), rules);
    if (cfg.use_rag && store && embedder) res.heuristics = retrieve_topk(*store, res.query, cfg.rag_k, *embedder);

    ToTNode root;
    for (const auto& h : res.heuristics) {
        if (!h.heuristic.action_hint || !h.heuristic.action_hint->seed) continue;
        try {
            root.params = apply_hint(root.params, *h.heuristic.action_hint);
            root.rationale = "seeded from heuristic '" + h.heuristic.id + "'";
        } catch (const Error& e) {
            res.errors.push_back("seed heuristic '" + h.heuristic.id + "' ignored: " + e.what());
        }
        break;
    }
    res.tree.push_back(root);
    std::vector<std::size_t> beam{0};
    int next_id = 1;

    for (int depth = 1; depth <= cfg.max_depth; ++depth) {
        std::vector<ToTNode> children;
        for (std::size_t idx : beam) {
            ExpansionResult e;
            try {
                e = expand_node(res.tree[idx], ctx.scene(), res.heuristics, ctx.directive(), expander, cfg);
            } catch (const Error& err) {
                if (err.code() != ErrorCode::Backend) throw;
                e.error = "expander backend failed for node " + std::to_string(res.tree[idx].id) + ": " + err.what();
            }
            if (e.error) res.errors.push_back(*e.error);
            for (auto& c : e.children) {
                c.id = next_id++;
                children.push_back(std::move(c));
            }
        }
        if (children.empty()) {
            if (depth == 1) {
                std::string msg = "no candidate could be expanded from the root";
                for (const auto& e : res.errors) msg += "; " + e;
                fail(ErrorCode::SearchFailure, msg);
            }
            break;
        }

        const unsigned workers = ctx.critic().supports_concurrency() ? cfg.workers : 1;
        run_indexed(children.size(), workers, [&](std::size_t i) { evaluate_candidate(children[i], ctx); });
        res.evaluated += static_cast<int>(children.size());

        std::vector<std::size_t> order(children.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ranks_before(children[a], children[b]); });
        const std::size_t base = res.tree.size();
        for (auto& c : children) res.tree.push_back(std::move(c));
        beam.clear();
        for (std::size_t i = 0; i < order.size() && static_cast<int>(i) < cfg.beam_width; ++i) beam.push_back(base + order[i]);
    }

    if (res.evaluated > max_evaluated_nodes(cfg)) {
        fail(ErrorCode::Internal, "search evaluated " + std::to_string(res.evaluated) + " nodes, bound is " +
                                      std::to_string(max_evaluated_nodes(cfg)));
    }
    const ToTNode* best = nullptr;
    for (const auto& n : res.tree) {
        if (n.score && (!best || ranks_before(n, *best))) best = &n;
    }
    res.best = best->params;
    res.best_id = best->id;
    return res;
}

} // namespace cdlgrade::agent
