#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "cdlgrade/agent/backend.hpp"
#include "cdlgrade/agent/perception.hpp"
#include "cdlgrade/cdl.hpp"

namespace cdlgrade::agent {

enum class Magnitude { Slight, Moderate, Heavy };

std::string to_string(Magnitude m);
std::optional<Magnitude> parse_magnitude(const std::string& s);

struct MagnitudeCaps {
    double slight = 0.02;
    double moderate = 0.05;
    double heavy = 0.10;

    double cap(Magnitude m) const;
};

struct FeedbackUpdate {
    std::map<std::string, double> targeted; // canonical path -> new absolute value
    std::set<std::string> locked;           // every other path
    Magnitude magnitude = Magnitude::Slight;
    std::string rationale;

    bool operator==(const FeedbackUpdate&) const = default;
};

nlohmann::json to_json(const FeedbackUpdate& u);
FeedbackUpdate update_from_json(const nlohmann::json& j);

struct FeedbackDecision {
    bool approved = false;
    std::optional<FeedbackUpdate> update;
    std::string rationale;
    int retries = 0;
};

// Validates a reflector reply against the current params. Returns the
// complaint or nullopt and fills `out`.
std::optional<std::string> parse_feedback_reply(const std::string& reply, const cdl::CdlParams& current,
                                                const MagnitudeCaps& caps, FeedbackDecision& out);

// Throws ReflectionParse after max_retries + 1 invalid replies.
FeedbackDecision parse_feedback(const std::string& feedback, const cdl::CdlParams& current, const SceneState& scene,
                                const std::optional<std::string>& directive, ModelBackend& llm, const MagnitudeCaps& caps,
                                int max_retries = 2);

// Targeted fields take their new values; locked fields are copied bit for
// bit. Throws std::logic_error when the update's targeted/locked sets do not
// partition the field set, and Validation when the result is out of range.
cdl::CdlParams apply_update(const cdl::CdlParams& current, const FeedbackUpdate& update);

// Field paths whose canonical serialization lines differ.
std::vector<std::string> serialization_diff(const cdl::CdlParams& a, const cdl::CdlParams& b);

enum class SessionStatus { Active, Approved, Exhausted, Failed };

std::string to_string(SessionStatus s);
SessionStatus parse_status(const std::string& s);

struct IterationAudit {
    int iteration = 0;
    std::string kind; // "search", "feedback" or "approval"
    std::string feedback;
    std::optional<FeedbackUpdate> update;
    nlohmann::json tree; // search audit, null for feedback steps

    bool operator==(const IterationAudit&) const = default;
};

struct FailureRecord {
    std::string feedback;
    std::string error_code;
    std::string message;

    bool operator==(const FailureRecord&) const = default;
};

struct GradingSession {
    std::string id;
    std::optional<SceneState> scene;
    std::vector<cdl::CdlParams> params_history;
    std::vector<IterationAudit> audits;
    std::vector<FailureRecord> failures;
    int max_iterations = 5;
    SessionStatus status = SessionStatus::Active;
    std::optional<std::string> directive;
    nlohmann::json source = nlohmann::json::object(); // anchor path, curve, gamut, clip info
    std::string query;

    // -1 before the base grade exists.
    int iteration() const { return static_cast<int>(params_history.size()) - 1; }
    bool operator==(const GradingSession&) const = default;
};

nlohmann::json to_json(const GradingSession& s);
GradingSession session_from_json(const nlohmann::json& j);

struct ReflectionOutcome {
    bool applied = false;
    bool approved = false;
    std::optional<FailureRecord> failure;
};

// One constrained transition. Inactive or ungraded sessions raise State.
// A parse failure leaves the history untouched and is recorded on the session.
// Only successful transitions count toward max_iterations.
ReflectionOutcome run_reflection(GradingSession& session, const std::string& feedback, ModelBackend& llm,
                                 const MagnitudeCaps& caps, int max_retries = 2);

} // namespace cdlgrade::agent
