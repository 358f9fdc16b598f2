#pragma once

#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cdlgrade/frame.hpp"

namespace cdlgrade::agent {

// Analyst and Critic are vision calls; Expander and Reflector are text-only.
enum class Role { Analyst, Expander, Critic, Reflector };

std::string to_string(Role role);
Role parse_role(const std::string& name);

struct ModelRequest {
    Role role = Role::Expander;
    std::string prompt;
    std::optional<Frame> image;
    // Stable identifier of what is being asked (e.g. "node-4"); lets
    // scripted replies stay deterministic under concurrent calls.
    std::string key;
};

// One text-in/text-out model call. Implementations must be safe to call from
// several threads when supports_concurrency() is true.
class ModelBackend {
public:
    virtual ~ModelBackend() = default;
    virtual std::string complete(const ModelRequest& request) = 0;
    virtual std::string identity() const = 0;
    virtual bool supports_concurrency() const { return true; }
};

struct RequestLogEntry {
    Role role;
    std::string key;
    std::string prompt;
    bool has_image = false;
    Colorimetry image_colorimetry;
    int image_width = 0;
    int image_height = 0;
};

// Replays canned replies. Per role, a reply keyed by request.key wins;
// otherwise the role's FIFO is consumed; otherwise a responder function is
// called. Running out raises FixtureExhausted.
class ScriptedBackend : public ModelBackend {
public:
    using Responder = std::function<std::string(const ModelRequest&)>;

    ScriptedBackend() = default;

    // Fixture document: {"analyst": [..], "expander": [..], "critic": [..],
    // "reflector": [..], "by_key": {"critic": {"node-1": ".."}}}. Reply
    // entries may be strings or JSON values (serialized on use).
    static std::unique_ptr<ScriptedBackend> from_json(const nlohmann::json& fixture);
    static std::unique_ptr<ScriptedBackend> from_file(const std::filesystem::path& path);

    void push(Role role, std::string reply);
    void set_keyed(Role role, const std::string& key, std::string reply);
    void set_responder(Role role, Responder responder);

    std::string complete(const ModelRequest& request) override;
    std::string identity() const override { return "scripted"; }
    // FIFO replies are order dependent, so concurrent callers would race for
    // them; keyed replies and responders are not.
    bool supports_concurrency() const override;

    std::vector<RequestLogEntry> request_log() const;
    std::size_t remaining(Role role) const;

    // FIFO positions, so a fixture can be resumed across processes.
    nlohmann::json cursor() const;
    void restore_cursor(const nlohmann::json& cursor);

private:
    struct Script {
        std::vector<std::string> fifo;
        std::size_t next = 0;
        std::map<std::string, std::string> keyed;
        Responder responder;
    };

    mutable std::mutex mu_;
    std::map<Role, Script> scripts_;
    std::vector<RequestLogEntry> log_;
};

// Pulls the first JSON object or array out of free-form model output
// (tolerates code fences and surrounding prose). Throws Parse.
nlohmann::json extract_json(const std::string& text);

// Replaces {{name}} placeholders; unknown placeholders are left as-is.
std::string render_template(const std::string& tpl, const std::map<std::string, std::string>& values);

// Prompt templates compiled in from assets/prompts.
const std::string& prompt_template(Role role);

} // namespace cdlgrade::agent
