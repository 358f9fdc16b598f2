#include "doctest.h"

#include <cstring>
#include <random>

#include "agent_fixtures.hpp"

#include "cdlgrade/agent/reflection.hpp"
#include "cdlgrade/error.hpp"

using namespace cdlgrade;
using namespace cdlgrade::agent;
using nlohmann::json;

namespace {

std::string update_reply(const std::string& magnitude, const json& targets) {
    return json{{"action", "update"}, {"magnitude", magnitude}, {"targets", targets}, {"rationale", "scripted"}}.dump();
}

cdl::CdlParams graded() {
    cdl::CdlParams p;
    p.lift = {0.01, 0.0, -0.005};
    p.gain = {1.05, 1.0, 0.97};
    p.saturation = 1.1;
    return p;
}

GradingSession graded_session() {
    GradingSession s;
    s.id = "s1";
    s.scene = cdlgrade::testing::example_scene();
    s.params_history.push_back(graded());
    s.audits.push_back({0, "search", "", std::nullopt, json::object()});
    return s;
}

FeedbackUpdate make_update(const std::map<std::string, double>& targeted) {
    FeedbackUpdate u;
    u.targeted = targeted;
    for (const auto& p : cdl::field_paths()) {
        if (!targeted.count(p)) u.locked.insert(p);
    }
    return u;
}

} // namespace

TEST_CASE("slightly cooler shadows touches only the lift") {
    const auto cur = graded();
    ScriptedBackend llm;
    llm.push(Role::Reflector, update_reply("slight", {{"lift.blue", cur.lift[2] + 0.01}, {"lift.r", cur.lift[0] - 0.01}}));
    const auto d = parse_feedback("Make the shadows slightly cooler", cur, cdlgrade::testing::example_scene(), std::nullopt, llm, {});
    REQUIRE(d.update);
    CHECK_FALSE(d.approved);
    CHECK(d.update->magnitude == Magnitude::Slight);
    CHECK(d.update->targeted.size() == 2);
    CHECK(d.update->targeted.at("lift.red") == doctest::Approx(0.0));
    CHECK(d.update->locked.size() == 10);
    for (const char* f : {"gain.red", "gamma.green", "saturation", "contrast", "pivot"}) CHECK(d.update->locked.count(f));

    const auto next = apply_update(cur, *d.update);
    CHECK(serialization_diff(cur, next) == std::vector<std::string>{"lift.red", "lift.blue"});
    CHECK(std::abs(next.lift[2] - cur.lift[2]) <= 0.02);
    CHECK(next.gain == cur.gain);

    const auto log = llm.request_log();
    REQUIRE(log.size() == 1);
    CHECK_FALSE(log[0].has_image);
    CHECK(log[0].prompt.find("Make the shadows slightly cooler") != std::string::npos);
    CHECK(log[0].prompt.find(cdl::canonical_serialize(cur)) != std::string::npos);
}

TEST_CASE("magnitude caps are enforced by re-prompting") {
    const auto cur = graded();
    ScriptedBackend llm;
    llm.push(Role::Reflector, update_reply("slight", {{"gain.red", cur.gain[0] + 0.05}}));
    llm.push(Role::Reflector, update_reply("heavy", {{"gain.red", cur.gain[0] + 0.05}}));
    const auto d = parse_feedback("Heavily warm the highlights", cur, cdlgrade::testing::example_scene(), std::nullopt, llm, {});
    CHECK(d.retries == 1);
    CHECK(d.update->magnitude == Magnitude::Heavy);
    CHECK(d.update->targeted.at("gain.red") == doctest::Approx(1.10));
    CHECK(llm.request_log()[1].prompt.find("more than the slight limit of 0.02") != std::string::npos);

    FeedbackDecision out;
    const MagnitudeCaps caps;
    CHECK_FALSE(parse_feedback_reply(update_reply("slight", {{"gain.red", cur.gain[0] + 0.02}}), cur, caps, out));
    CHECK(parse_feedback_reply(update_reply("moderate", {{"gain.red", cur.gain[0] + 0.051}}), cur, caps, out));
    CHECK_FALSE(parse_feedback_reply(update_reply("heavy", {{"gain.red", cur.gain[0] + 0.1}}), cur, caps, out));
    CHECK(parse_feedback_reply(update_reply("heavy", {{"gamma.red", 0.0}}), cur, caps, out)->find("outside") != std::string::npos);
    CHECK(parse_feedback_reply(update_reply("huge", {{"gain.red", 1.0}}), cur, caps, out));
    CHECK(parse_feedback_reply(update_reply("slight", json::object()), cur, caps, out));
    CHECK(parse_feedback_reply(update_reply("slight", {{"gain.r", 1.05}, {"gain.red", 1.05}}), cur, caps, out));
    CHECK(parse_feedback_reply(update_reply("slight", {{"hue", 0.01}}), cur, caps, out));
    CHECK(parse_feedback_reply(R"({"action": "undo"})", cur, caps, out));
    CHECK_FALSE(parse_feedback_reply(R"(Looks great. {"action": "approve", "rationale": "done"})", cur, caps, out));
    CHECK(out.approved);
}

TEST_CASE("apply_update copies locked fields bit for bit") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> small(-0.02, 0.02);
    const auto& paths = cdl::field_paths();
    for (int trial = 0; trial < 200; ++trial) {
        cdl::CdlParams cur;
        cur.lift = {small(rng), small(rng), small(rng)};
        cur.gamma = {1 + small(rng), 1 + small(rng), 1 + small(rng)};
        cur.gain = {1 + small(rng), 1 + small(rng), 1 + small(rng)};
        cur.saturation = 1 + small(rng);
        std::map<std::string, double> targeted;
        for (const auto& p : paths) {
            if (rng() % 4 == 0 && p != "pivot") targeted[p] = cdl::get_field(cur, p) + small(rng);
        }
        const auto next = apply_update(cur, make_update(targeted));
        for (const auto& p : paths) {
            const double a = cdl::get_field(cur, p), b = cdl::get_field(next, p);
            if (targeted.count(p)) CHECK(b == targeted[p]);
            else CHECK(std::memcmp(&a, &b, sizeof a) == 0);
        }
        for (const auto& p : serialization_diff(cur, next)) CHECK(targeted.count(p));
    }
    const auto cur = graded();
    CHECK(apply_update(cur, make_update({})) == cur);
}

TEST_CASE("disjoint updates commute") {
    const auto cur = graded();
    const auto a = make_update({{"lift.blue", 0.01}});
    const auto b = make_update({{"gain.red", 1.07}, {"saturation", 1.12}});
    CHECK(apply_update(apply_update(cur, a), b) == apply_update(apply_update(cur, b), a));
}

TEST_CASE("malformed updates are programming errors") {
    const auto cur = graded();
    auto overlap = make_update({{"lift.blue", 0.01}});
    overlap.locked.insert("lift.blue");
    CHECK_THROWS_AS(apply_update(cur, overlap), std::logic_error);
    auto missing = make_update({{"lift.blue", 0.01}});
    missing.locked.erase("contrast");
    CHECK_THROWS_AS(apply_update(cur, missing), std::logic_error);
    auto alias = make_update({});
    alias.locked.erase("lift.blue");
    alias.targeted["lift.b"] = 0.01;
    CHECK_THROWS_AS(apply_update(cur, alias), std::logic_error);
}

TEST_CASE("session exhausts after five feedback steps") {
    auto s = graded_session();
    ScriptedBackend llm;
    for (int i = 1; i <= 5; ++i) llm.push(Role::Reflector, update_reply("slight", {{"lift.blue", -0.005 + 0.01 * i}}));
    for (int i = 1; i <= 5; ++i) {
        CHECK(s.status == SessionStatus::Active);
        const auto before = s.params_history.back();
        const auto out = run_reflection(s, "cooler shadows", llm, {});
        CHECK(out.applied);
        CHECK(s.iteration() == i);
        CHECK(serialization_diff(before, s.params_history.back()) == std::vector<std::string>{"lift.blue"});
    }
    CHECK(s.status == SessionStatus::Exhausted);
    CHECK(s.audits.size() == 6);
    CHECK(s.audits.back().kind == "feedback");
    try {
        (void)run_reflection(s, "one more", llm, {});
        FAIL("expected a state error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::State);
    }
    CHECK(s.iteration() == 5);
}

TEST_CASE("approval ends the session without a new iteration") {
    auto s = graded_session();
    ScriptedBackend llm;
    llm.push(Role::Reflector, update_reply("slight", {{"saturation", 1.11}}));
    llm.push(Role::Reflector, R"({"action": "approve", "rationale": "director is happy"})");
    CHECK(run_reflection(s, "a touch more color", llm, {}).applied);
    const auto out = run_reflection(s, "perfect, ship it", llm, {});
    CHECK(out.approved);
    CHECK_FALSE(out.applied);
    CHECK(s.iteration() == 1);
    CHECK(s.status == SessionStatus::Approved);
    CHECK(s.audits.back().kind == "approval");
}

TEST_CASE("parse failures leave the history untouched") {
    auto s = graded_session();
    ScriptedBackend llm;
    for (int i = 0; i < 3; ++i) llm.push(Role::Reflector, "I would warm it up a bit");
    const auto out = run_reflection(s, "warmer", llm, {});
    CHECK_FALSE(out.applied);
    REQUIRE(out.failure);
    CHECK(out.failure->error_code == "reflection_parse_failure");
    CHECK(s.iteration() == 0);
    CHECK(s.status == SessionStatus::Active);
    REQUIRE(s.failures.size() == 1);
    CHECK(s.failures[0].feedback == "warmer");
    CHECK(llm.request_log().size() == 3);

    GradingSession ungraded;
    ungraded.id = "u";
    CHECK_THROWS_AS(run_reflection(ungraded, "x", llm, {}), Error);
    CHECK_THROWS_AS(run_reflection(s, "  ", llm, {}), Error);
}

TEST_CASE("session document round trip") {
    auto s = graded_session();
    s.directive = "cinematic teal and orange";
    s.query = "cinematic teal and orange";
    s.source = {{"anchor", "/clip/frame_0006.png"}, {"curve", "slog3"}};
    ScriptedBackend llm;
    llm.push(Role::Reflector, update_reply("moderate", {{"contrast", 1.04}}));
    (void)run_reflection(s, "more punch", llm, {});
    s.failures.push_back({"x", "backend", "timeout"});
    const auto back = session_from_json(json::parse(to_json(s).dump()));
    CHECK(back == s);
    CHECK(to_json(back) == to_json(s));
    CHECK(parse_status("exhausted") == SessionStatus::Exhausted);
    CHECK_THROWS_AS(session_from_json(json::object()), Error);
}
