#include "cdlgrade/agent/reflection.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "cdlgrade/error.hpp"
#include "cdlgrade/params_json.hpp"

namespace cdlgrade::agent {

namespace {

// Slack for values like current + 0.02 that do not round-trip exactly.
constexpr double kCapSlack = 1e-9;

std::string num(double v) {
    std::ostringstream s;
    s << v;
    return s.str();
}

std::vector<std::string> lines(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

} // namespace

std::string to_string(Magnitude m) {
    switch (m) {
    case Magnitude::Slight: return "slight";
    case Magnitude::Moderate: return "moderate";
    case Magnitude::Heavy: return "heavy";
    }
    return "slight";
}

std::optional<Magnitude> parse_magnitude(const std::string& s) {
    if (s == "slight") return Magnitude::Slight;
    if (s == "moderate") return Magnitude::Moderate;
    if (s == "heavy") return Magnitude::Heavy;
    return std::nullopt;
}

double MagnitudeCaps::cap(Magnitude m) const {
    switch (m) {
    case Magnitude::Slight: return slight;
    case Magnitude::Moderate: return moderate;
    case Magnitude::Heavy: return heavy;
    }
    return slight;
}

nlohmann::json to_json(const FeedbackUpdate& u) {
    return {{"targeted", u.targeted}, {"locked", u.locked}, {"magnitude", to_string(u.magnitude)}, {"rationale", u.rationale}};
}

FeedbackUpdate update_from_json(const nlohmann::json& j) {
    FeedbackUpdate u;
    u.targeted = j.at("targeted").get<std::map<std::string, double>>();
    u.locked = j.at("locked").get<std::set<std::string>>();
    const auto m = parse_magnitude(j.at("magnitude").get<std::string>());
    if (!m) fail(ErrorCode::Parse, "unknown magnitude in stored update");
    u.magnitude = *m;
    u.rationale = j.value("rationale", "");
    return u;
}

std::optional<std::string> parse_feedback_reply(const std::string& reply, const cdl::CdlParams& current,
                                                const MagnitudeCaps& caps, FeedbackDecision& out) {
    nlohmann::json j;
    try {
        j = extract_json(reply);
    } catch (const Error&) {
        return "the reply did not contain a JSON object";
    }
    if (!j.is_object() || !j.contains("action") || !j["action"].is_string()) return "missing 'action' (\"update\" or \"approve\")";
    const std::string action = j["action"].get<std::string>();
    const std::string rationale = j.contains("rationale") && j["rationale"].is_string() ? j["rationale"].get<std::string>() : "";
    if (action == "approve") {
        out = FeedbackDecision{true, std::nullopt, rationale, 0};
        return std::nullopt;
    }
    if (action != "update") return "'action' must be \"update\" or \"approve\"";

    if (!j.contains("magnitude") || !j["magnitude"].is_string()) return "missing 'magnitude'";
    const auto magnitude = parse_magnitude(j["magnitude"].get<std::string>());
    if (!magnitude) return "'magnitude' must be slight, moderate or heavy";
    if (!j.contains("targets") || !j["targets"].is_object() || j["targets"].empty()) return "'targets' must be a non-empty object";

    FeedbackUpdate u;
    u.magnitude = *magnitude;
    u.rationale = rationale;
    const double cap = caps.cap(*magnitude);
    for (const auto& [key, value] : j["targets"].items()) {
        const auto path = cdl::canonical_field(key);
        if (!path) return "unknown parameter '" + key + "'";
        if (u.targeted.count(*path)) return "parameter '" + *path + "' targeted twice";
        if (!value.is_number() || !std::isfinite(value.get<double>())) return "target '" + key + "' must be a number";
        const double v = value.get<double>();
        const cdl::FieldRange range = cdl::field_range(*path);
        if (!range.contains(v)) return *path + " = " + num(v) + " is outside " + range.describe();
        const double step = std::abs(v - cdl::get_field(current, *path));
        if (step > cap + kCapSlack) {
            return *path + " moves by " + num(step) + ", more than the " + to_string(*magnitude) + " limit of " + num(cap);
        }
        u.targeted[*path] = v;
    }
    for (const auto& path : cdl::field_paths()) {
        if (!u.targeted.count(path)) u.locked.insert(path);
    }
    out = FeedbackDecision{false, std::move(u), rationale, 0};
    return std::nullopt;
}

FeedbackDecision parse_feedback(const std::string& feedback, const cdl::CdlParams& current, const SceneState& scene,
                                const std::optional<std::string>& directive, ModelBackend& llm, const MagnitudeCaps& caps,
                                int max_retries) {
    std::string complaint;
    for (int attempt = 0; attempt <= max_retries; ++attempt) {
        const std::string prompt = render_template(
            prompt_template(Role::Reflector),
            {{"scene_state", serialize_scene(scene)},
             {"directive", directive.value_or("none")},
             {"current_params", cdl::canonical_serialize(current)},
             {"feedback", feedback},
             {"complaint", complaint.empty() ? "" : "Your previous reply was rejected: " + complaint}});
        const std::string reply = llm.complete({Role::Reflector, prompt, std::nullopt, ""});
        FeedbackDecision decision;
        if (auto problem = parse_feedback_reply(reply, current, caps, decision)) {
            complaint = *problem;
            continue;
        }
        decision.retries = attempt;
        return decision;
    }
    fail(ErrorCode::ReflectionParse,
         "reflector gave " + std::to_string(max_retries + 1) + " invalid replies; last problem: " + complaint);
}

cdl::CdlParams apply_update(const cdl::CdlParams& current, const FeedbackUpdate& update) {
    for (const auto& [path, v] : update.targeted) {
        if (update.locked.count(path)) throw std::logic_error("update targets locked field " + path);
        if (!cdl::canonical_field(path) || *cdl::canonical_field(path) != path) {
            throw std::logic_error("update targets non-canonical field " + path);
        }
    }
    if (update.targeted.size() + update.locked.size() != cdl::field_paths().size()) {
        throw std::logic_error("targeted and locked fields do not partition the parameter set");
    }
    cdl::CdlParams next = current;
    for (const auto& [path, v] : update.targeted) cdl::set_field(next, path, v);
    cdl::require_valid(next);
    return next;
}

std::vector<std::string> serialization_diff(const cdl::CdlParams& a, const cdl::CdlParams& b) {
    const auto la = lines(cdl::canonical_serialize(a));
    const auto lb = lines(cdl::canonical_serialize(b));
    std::vector<std::string> out;
    for (std::size_t i = 0; i < la.size() && i < lb.size(); ++i) {
        if (la[i] != lb[i]) out.push_back(la[i].substr(0, la[i].find(' ')));
    }
    return out;
}

std::string to_string(SessionStatus s) {
    switch (s) {
    case SessionStatus::Active: return "active";
    case SessionStatus::Approved: return "approved";
    case SessionStatus::Exhausted: return "exhausted";
    case SessionStatus::Failed: return "failed";
    }
    return "failed";
}

SessionStatus parse_status(const std::string& s) {
    for (SessionStatus v : {SessionStatus::Active, SessionStatus::Approved, SessionStatus::Exhausted, SessionStatus::Failed}) {
        if (to_string(v) == s) return v;
    }
    fail(ErrorCode::Parse, "unknown session status '" + s + "'");
}

nlohmann::json to_json(const GradingSession& s) {
    nlohmann::json history = nlohmann::json::array();
    for (const auto& p : s.params_history) history.push_back(cdl::to_json(p));
    nlohmann::json audits = nlohmann::json::array();
    for (const auto& a : s.audits) {
        audits.push_back({{"iteration", a.iteration},
                          {"kind", a.kind},
                          {"feedback", a.feedback},
                          {"update", a.update ? to_json(*a.update) : nlohmann::json()},
                          {"tree", a.tree}});
    }
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& f : s.failures) failures.push_back({{"feedback", f.feedback}, {"error_code", f.error_code}, {"message", f.message}});
    return {{"id", s.id},
            {"scene", s.scene ? to_json(*s.scene) : nlohmann::json()},
            {"params_history", history},
            {"audits", audits},
            {"failures", failures},
            {"iteration", s.iteration()},
            {"max_iterations", s.max_iterations},
            {"status", to_string(s.status)},
            {"directive", s.directive ? nlohmann::json(*s.directive) : nlohmann::json()},
            {"source", s.source},
            {"query", s.query}};
}

GradingSession session_from_json(const nlohmann::json& j) {
    try {
        GradingSession s;
        s.id = j.at("id").get<std::string>();
        if (!j.at("scene").is_null()) s.scene = scene_from_json(j["scene"]);
        for (const auto& p : j.at("params_history")) s.params_history.push_back(cdl::params_from_json(p));
        for (const auto& a : j.at("audits")) {
            IterationAudit audit;
            audit.iteration = a.at("iteration").get<int>();
            audit.kind = a.at("kind").get<std::string>();
            audit.feedback = a.value("feedback", "");
            if (a.contains("update") && !a["update"].is_null()) audit.update = update_from_json(a["update"]);
            audit.tree = a.value("tree", nlohmann::json());
            s.audits.push_back(std::move(audit));
        }
        for (const auto& f : j.at("failures")) {
            s.failures.push_back({f.at("feedback").get<std::string>(), f.at("error_code").get<std::string>(), f.at("message").get<std::string>()});
        }
        s.max_iterations = j.at("max_iterations").get<int>();
        s.status = parse_status(j.at("status").get<std::string>());
        if (!j.at("directive").is_null()) s.directive = j["directive"].get<std::string>();
        s.source = j.value("source", nlohmann::json::object());
        s.query = j.value("query", "");
        if (j.contains("iteration") && j["iteration"].get<int>() != s.iteration()) {
            fail(ErrorCode::Parse, "session iteration does not match its history length");
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Parse, std::string("session document: ") + e.what());
    }
}

ReflectionOutcome run_reflection(GradingSession& session, const std::string& feedback, ModelBackend& llm,
                                 const MagnitudeCaps& caps, int max_retries) {
    if (session.status != SessionStatus::Active) {
        fail(ErrorCode::State, "session " + session.id + " is " + to_string(session.status) + ", feedback is closed");
    }
    if (session.iteration() < 0 || !session.scene) fail(ErrorCode::State, "session " + session.id + " has no base grade yet");
    if (feedback.find_first_not_of(" \t\r\n") == std::string::npos) fail(ErrorCode::InvalidInput, "feedback text is empty");

    const cdl::CdlParams& current = session.params_history.back();
    ReflectionOutcome outcome;
    FeedbackDecision decision;
    try {
        decision = parse_feedback(feedback, current, *session.scene, session.directive, llm, caps, max_retries);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::ReflectionParse && e.code() != ErrorCode::Backend) throw;
        FailureRecord rec{feedback, std::string(to_string(e.code())), e.what()};
        session.failures.push_back(rec);
        outcome.failure = std::move(rec);
        return outcome;
    }
    if (decision.approved) {
        session.status = SessionStatus::Approved;
        session.audits.push_back({session.iteration(), "approval", feedback, std::nullopt, nlohmann::json()});
        outcome.approved = true;
        return outcome;
    }
    const cdl::CdlParams next = apply_update(current, *decision.update);
    session.params_history.push_back(next);
    session.audits.push_back({session.iteration(), "feedback", feedback, decision.update, nlohmann::json()});
    if (session.iteration() >= session.max_iterations) session.status = SessionStatus::Exhausted;
    outcome.applied = true;
    return outcome;
}

} // namespace cdlgrade::agent
