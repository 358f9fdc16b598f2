#include "doctest.h"

#include <map>

#include "agent_fixtures.hpp"

#include "cdlgrade/agent/reasoning.hpp"
#include "cdlgrade/error.hpp"

using namespace cdlgrade;
using namespace cdlgrade::agent;
using cdlgrade::testing::candidates_reply;
using cdlgrade::testing::critic_reply;
using nlohmann::json;

namespace {

Frame preview() {
    return EvaluationContext::make_preview(cdlgrade::testing::synthetic_slog3(), color::gamut("sgamut3cine"), 64);
}

std::string three_deltas(const std::string& tag, double base) {
    return candidates_reply({json{{"gain.red", base + 0.01}}, json{{"gain.green", base + 0.02}}, json{{"lift.blue", base / 10 + 0.003}}}, tag);
}

// Expander scripted per node id for the default b=3, D=2 tree, where the
// depth-1 beam is always {ids 1..3} ranked by the critic.
void script_expander(ScriptedBackend& b) {
    b.set_keyed(Role::Expander, "expand-0", three_deltas("root-", 0.0));
    for (int id = 1; id <= 3; ++id) b.set_keyed(Role::Expander, "expand-" + std::to_string(id), three_deltas("n" + std::to_string(id) + "-", 0.01 * id));
}

void script_scores(ScriptedBackend& b, const std::map<int, double>& scores) {
    for (const auto& [id, s] : scores) b.set_keyed(Role::Critic, "node-" + std::to_string(id), critic_reply(s, "node " + std::to_string(id)));
}

SearchConfig small_config(unsigned workers = 1) {
    SearchConfig cfg;
    cfg.workers = workers;
    return cfg;
}

class FailingBackend : public ModelBackend {
public:
    std::string complete(const ModelRequest&) override { fail(ErrorCode::Backend, "connection refused"); }
    std::string identity() const override { return "failing"; }
};

} // namespace

TEST_CASE("candidate parsing") {
    const cdl::CdlParams parent{};
    std::vector<std::pair<cdl::CdlParams, std::string>> out;
    CHECK_FALSE(parse_candidates(three_deltas("a", 0.0), parent, 3, out));
    REQUIRE(out.size() == 3);
    CHECK(out[0].first.gain[0] == doctest::Approx(1.01));
    CHECK(out[0].second == "a1");

    const std::string absolute = R"({"candidates": [
        {"params": {"gain": [1.1, 1.0, 0.9]}, "rationale": "r1"},
        {"params": {"gamma": 1.05, "sat": 1.2}, "rationale": "r2"},
        {"delta": {"lift": [0.01, 0, -0.01], "contrast": 0.1}, "rationale": "r3"}]})";
    CHECK_FALSE(parse_candidates(absolute, parent, 3, out));
    CHECK(out[0].first.gain == std::array<double, 3>{1.1, 1.0, 0.9});
    CHECK(out[1].first.gamma == std::array<double, 3>{1.05, 1.05, 1.05});
    CHECK(out[1].first.saturation == 1.2);
    CHECK(out[2].first.lift[2] == doctest::Approx(-0.01));
    CHECK(out[2].first.contrast == doctest::Approx(1.1));

    // Top-level arrays are accepted.
    CHECK_FALSE(parse_candidates(json::parse(three_deltas("x", 0.0))["candidates"].dump(), parent, 3, out));

    const std::vector<std::pair<std::string, std::string>> bad = {
        {"prose only", "JSON"},
        {R"({"candidates": []})", "exactly 3"},
        {R"([{"delta": {}, "params": {}, "rationale": "x"}, 1, 2])", "exactly one"},
        {R"([{"delta": {"gain.red": 0.1}}, 1, 2])", "rationale"},
        {R"([{"params": {"gamma.g": 0}, "rationale": "x"}, {"delta": {}, "rationale": "y"}, {"delta": {}, "rationale": "z"}])", "gamma.green"},
        {R"([{"params": {"hue": 1}, "rationale": "x"}, {"delta": {}, "rationale": "y"}, {"delta": {}, "rationale": "z"}])", "hue"},
    };
    for (const auto& [reply, needle] : bad) {
        CAPTURE(reply);
        const auto complaint = parse_candidates(reply, parent, 3, out);
        REQUIRE(complaint);
        CHECK(complaint->find(needle) != std::string::npos);
    }
}

TEST_CASE("expansion re-prompts on an out-of-range gamma") {
    ScriptedBackend llm;
    llm.push(Role::Expander, R"([{"params": {"gamma.g": 0}, "rationale": "x"}, {"delta": {}, "rationale": "y"}, {"delta": {}, "rationale": "z"}])");
    llm.push(Role::Expander, three_deltas("ok", 0.0));
    ToTNode root;
    HeuristicStore store;
    HashedEmbedder e;
    store = parse_store(json::parse(R"({"heuristics": [{"id": "h1", "text": "warm highlights gently"}]})"), e);
    const auto retrieved = retrieve_topk(store, "warm", 1, e);
    const auto result = expand_node(root, cdlgrade::testing::example_scene(), retrieved, std::nullopt, llm, SearchConfig{});
    CHECK(result.retries == 1);
    CHECK_FALSE(result.error);
    REQUIRE(result.children.size() == 3);
    for (const auto& c : result.children) {
        CHECK(c.depth == 1);
        CHECK(c.parent_id == 0);
    }
    const auto log = llm.request_log();
    REQUIRE(log.size() == 2);
    CHECK(log[0].key == "expand-0");
    CHECK_FALSE(log[0].has_image);
    CHECK(log[0].prompt.find("warm highlights gently") != std::string::npos);
    CHECK(log[0].prompt.find("golden_hour") != std::string::npos);
    CHECK(log[1].prompt.find("gamma.green") != std::string::npos);

    ScriptedBackend stubborn;
    for (int i = 0; i < 3; ++i) stubborn.push(Role::Expander, "no");
    const auto failed = expand_node(root, cdlgrade::testing::example_scene(), {}, std::nullopt, stubborn, SearchConfig{});
    CHECK(failed.children.empty());
    REQUIRE(failed.error);
}

TEST_CASE("critic receives the rendered preview and tone report") {
    ScriptedBackend vlm;
    vlm.push(Role::Critic, R"({"score": "4.5", "critique": "nice"})");
    const EvaluationContext ctx(preview(), cdlgrade::testing::example_scene(), std::string("make it warm"), vlm, small_config());
    ToTNode node;
    node.id = 7;
    node.params.gain = {1.1, 1.0, 0.9};
    evaluate_candidate(node, ctx);
    CHECK(node.score == 4.5);
    CHECK(node.critique == "nice");
    REQUIRE(node.tones);
    CHECK(node.tones->ranges.size() == 2);
    const auto log = vlm.request_log();
    REQUIRE(log.size() == 1);
    CHECK(log[0].key == "node-7");
    CHECK(log[0].image_colorimetry == Colorimetry::rec709_display());
    CHECK(log[0].image_width == 64);
    CHECK(log[0].prompt.find("skin") != std::string::npos);
    CHECK(log[0].prompt.find("make it warm") != std::string::npos);
    CHECK(ctx.render(node.params) == ctx.render(node.params));
}

TEST_CASE("critic failures score the floor") {
    ScriptedBackend vlm;
    for (const char* bad : {"great!", R"({"score": 7})", R"({"score": "high"})"}) vlm.push(Role::Critic, bad);
    const EvaluationContext ctx(preview(), cdlgrade::testing::example_scene(), std::nullopt, vlm, small_config());
    ToTNode node;
    evaluate_candidate(node, ctx);
    CHECK(node.score == 1.0);
    CHECK(node.critic_failed);

    FailingBackend down;
    const EvaluationContext ctx2(preview(), cdlgrade::testing::example_scene(), std::nullopt, down, small_config());
    ToTNode other;
    evaluate_candidate(other, ctx2);
    CHECK(other.score == 1.0);
    CHECK(other.critique.find("connection refused") != std::string::npos);
}

TEST_CASE("beam search follows the hand-enumerated tree") {
    ScriptedBackend llm, vlm;
    script_expander(llm);
    // Depth 1: {4, 2, 5} -> beam is node 3 then node 1.
    script_scores(vlm, {{1, 4}, {2, 2}, {3, 5}, {4, 3}, {5, 4.5}, {6, 2}, {7, 4.8}, {8, 1}, {9, 3}});
    const EvaluationContext ctx(preview(), cdlgrade::testing::example_scene(), std::nullopt, vlm, small_config());
    const auto r = beam_search(ctx, nullptr, nullptr, llm);

    CHECK(r.evaluated == 9);
    CHECK(r.evaluated <= max_evaluated_nodes(SearchConfig{}));
    REQUIRE(r.tree.size() == 10);
    CHECK_FALSE(r.tree[0].score);
    CHECK(r.tree[0].params == cdl::CdlParams{});
    // Node 3 was expanded first, so its children hold ids 4..6.
    for (int id = 4; id <= 6; ++id) CHECK(r.tree[static_cast<std::size_t>(id)].parent_id == 3);
    for (int id = 7; id <= 9; ++id) CHECK(r.tree[static_cast<std::size_t>(id)].parent_id == 1);
    CHECK_FALSE(std::any_of(r.tree.begin(), r.tree.end(), [](const ToTNode& n) { return n.parent_id == 2; }));
    // Global argmax is the depth-1 node, not a leaf.
    CHECK(r.best_id == 3);
    CHECK(r.best == r.tree[3].params);
    // Node 3 is the lift.blue candidate; its first child adds gain.red 0.04.
    CHECK(r.tree[4].params.gain[0] == doctest::Approx(1.04));
    CHECK(r.tree[4].params.lift[2] == doctest::Approx(0.003));
    CHECK(r.query == "warm cinematic grade with highlight preservation");
    CHECK(r.errors.empty());

    const auto critic_calls = vlm.request_log();
    CHECK(critic_calls.size() == 9);
    CHECK(llm.request_log().size() == 3);
}

TEST_CASE("beam search picks a deeper node when it scores higher") {
    ScriptedBackend llm, vlm;
    script_expander(llm);
    script_scores(vlm, {{1, 4}, {2, 2}, {3, 4.5}, {4, 3}, {5, 4.9}, {6, 2}, {7, 4.9}, {8, 1}, {9, 3}});
    const EvaluationContext ctx(preview(), cdlgrade::testing::example_scene(), std::nullopt, vlm, small_config());
    const auto r = beam_search(ctx, nullptr, nullptr, llm);
    // Nodes 5 and 7 tie at 4.9; the lower id wins.
    CHECK(r.best_id == 5);
}

TEST_CASE("ties in the beam break by ascending id") {
    ScriptedBackend llm, vlm;
    script_expander(llm);
    script_scores(vlm, {{1, 3}, {2, 3}, {3, 3}, {4, 1}, {5, 1}, {6, 1}, {7, 1}, {8, 1}, {9, 1}});
    const EvaluationContext ctx(preview(), cdlgrade::testing::example_scene(), std::nullopt, vlm, small_config());
    const auto r = beam_search(ctx, nullptr, nullptr, llm);
    CHECK(r.tree[4].parent_id == 1);
    CHECK(r.tree[7].parent_id == 2);
    CHECK(r.best_id == 1);
}

TEST_CASE("beam search is deterministic across worker counts and runs") {
    // Score from the rendered pixels: warmer previews score higher.
    auto warmth_critic = [](const ModelRequest& req) {
        double warm = 0;
        for (const auto& p : req.image->pixels) warm += p[0] - p[2];
        warm /= static_cast<double>(req.image->pixel_count());
        return critic_reply(std::clamp(3.0 + 20.0 * warm, 1.0, 5.0));
    };
    std::string first;
    for (unsigned workers : {1u, 2u, 4u, 1u}) {
        ScriptedBackend llm, vlm;
        vlm.set_responder(Role::Critic, warmth_critic);
        llm.set_responder(Role::Expander, [](const ModelRequest& req) { return three_deltas(req.key + "-", 0.005); });
        const EvaluationContext ctx(preview(), cdlgrade::testing::example_scene(), std::nullopt, vlm, small_config(workers));
        const std::string dump = to_json(beam_search(ctx, nullptr, nullptr, llm)).dump();
        if (first.empty()) first = dump;
        CHECK(dump == first);
    }
}

TEST_CASE("retrieved heuristics reach the expander and seeds set the root") {
    HashedEmbedder e;
    const auto store = parse_store(json::parse(R"({"heuristics": [
        {"id": "warm-seed", "text": "warm cinematic grade with highlight preservation", "action_hint": "gain.r:+0.04", "seed": true},
        {"id": "other", "text": "cold horror"}]})"), e);
    ScriptedBackend llm, vlm;
    script_expander(llm);
    script_scores(vlm, {{1, 4}, {2, 2}, {3, 5}, {4, 3}, {5, 4.5}, {6, 2}, {7, 4.8}, {8, 1}, {9, 3}});
    const EvaluationContext ctx(preview(), cdlgrade::testing::example_scene(), std::nullopt, vlm, small_config());
    const auto r = beam_search(ctx, &store, &e, llm);
    REQUIRE(r.heuristics.size() == 2);
    CHECK(r.heuristics[0].heuristic.id == "warm-seed");
    CHECK(r.tree[0].params.gain[0] == doctest::Approx(1.04));
    CHECK_FALSE(r.tree[0].score);
    CHECK(r.tree[1].params.gain[0] == doctest::Approx(1.05));
    CHECK(llm.request_log()[0].prompt.find("warm-seed") != std::string::npos);

    SearchConfig no_rag = small_config();
    no_rag.use_rag = false;
    ScriptedBackend llm2, vlm2;
    script_expander(llm2);
    script_scores(vlm2, {{1, 4}, {2, 2}, {3, 5}, {4, 3}, {5, 4.5}, {6, 2}, {7, 4.8}, {8, 1}, {9, 3}});
    const EvaluationContext ctx2(preview(), cdlgrade::testing::example_scene(), std::nullopt, vlm2, no_rag);
    const auto r2 = beam_search(ctx2, &store, &e, llm2);
    CHECK(r2.heuristics.empty());
    CHECK(r2.tree[0].params == cdl::CdlParams{});
}

TEST_CASE("expansion failures") {
    SUBCASE("root failure aborts the search") {
        FailingBackend llm;
        ScriptedBackend vlm;
        const EvaluationContext ctx(preview(), cdlgrade::testing::example_scene(), std::nullopt, vlm, small_config());
        try {
            (void)beam_search(ctx, nullptr, nullptr, llm);
            FAIL("expected a search failure");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::SearchFailure);
            CHECK(std::string(e.what()).find("connection refused") != std::string::npos);
        }
    }
    SUBCASE("a failed deeper expansion is recorded") {
        ScriptedBackend llm, vlm;
        llm.set_keyed(Role::Expander, "expand-0", three_deltas("root-", 0.0));
        llm.set_keyed(Role::Expander, "expand-3", three_deltas("n3-", 0.03));
        for (int i = 0; i < 3; ++i) llm.push(Role::Expander, "not json");
        script_scores(vlm, {{1, 4}, {2, 2}, {3, 5}, {4, 3}, {5, 4.5}, {6, 2}});
        const EvaluationContext ctx(preview(), cdlgrade::testing::example_scene(), std::nullopt, vlm, small_config());
        const auto r = beam_search(ctx, nullptr, nullptr, llm);
        CHECK(r.evaluated == 6);
        REQUIRE(r.errors.size() == 1);
        CHECK(r.errors[0].find("node 1") != std::string::npos);
        CHECK(r.best_id == 3);
    }
}

TEST_CASE("evaluated-node bound") {
    SearchConfig cfg;
    CHECK(max_evaluated_nodes(cfg) == 9);
    cfg.max_depth = 3;
    cfg.beam_width = 3;
    cfg.branching = 4;
    CHECK(max_evaluated_nodes(cfg) == 4 + 4 * 3 * 2);
    cfg.branching = 0;
    CHECK_THROWS_AS(validate(cfg), Error);
}

TEST_CASE("tree nodes round trip") {
    ToTNode n;
    n.id = 4;
    n.depth = 2;
    n.parent_id = 3;
    n.score = 4.5;
    n.rationale = "warmer";
    n.params.saturation = 1.2;
    n.tones = stats::ProtectedToneReport{{{"skin", 10, 1.5, 3.0, 1.1, false}}};
    const auto back = node_from_json(to_json(n));
    CHECK(to_json(back) == to_json(n));
    CHECK(back.params == n.params);
}
