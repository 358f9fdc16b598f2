#include "cdlgrade/agent/backend.hpp"

#include <fstream>

#include "cdlgrade/error.hpp"
#include "prompt_assets.hpp"

namespace cdlgrade::agent {

namespace {

constexpr Role kRoles[] = {Role::Analyst, Role::Expander, Role::Critic, Role::Reflector};

std::string reply_text(const nlohmann::json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

} // namespace

std::string to_string(Role role) {
    switch (role) {
    case Role::Analyst: return "analyst";
    case Role::Expander: return "expander";
    case Role::Critic: return "critic";
    case Role::Reflector: return "reflector";
    }
    return "unknown";
}

Role parse_role(const std::string& name) {
    for (Role r : kRoles) {
        if (to_string(r) == name) return r;
    }
    fail(ErrorCode::InvalidInput, "unknown backend role '" + name + "'");
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_json(const nlohmann::json& fixture) {
    if (!fixture.is_object()) fail(ErrorCode::Config, "scripted fixture must be a JSON object");
    auto backend = std::make_unique<ScriptedBackend>();
    for (const auto& [name, value] : fixture.items()) {
        if (name == "by_key") {
            for (const auto& [role, table] : value.items()) {
                for (const auto& [key, reply] : table.items()) backend->set_keyed(parse_role(role), key, reply_text(reply));
            }
        } else if (name == "comment") {
            continue;
        } else {
            const Role role = parse_role(name);
            if (!value.is_array()) fail(ErrorCode::Config, "fixture entry '" + name + "' must be an array");
            for (const auto& reply : value) backend->push(role, reply_text(reply));
        }
    }
    return backend;
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Config, "cannot open scripted fixture " + path.string());
    try {
        return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Config, "scripted fixture " + path.string() + ": " + e.what());
    }
}

void ScriptedBackend::push(Role role, std::string reply) {
    std::lock_guard lock(mu_);
    scripts_[role].fifo.push_back(std::move(reply));
}

void ScriptedBackend::set_keyed(Role role, const std::string& key, std::string reply) {
    std::lock_guard lock(mu_);
    scripts_[role].keyed[key] = std::move(reply);
}

void ScriptedBackend::set_responder(Role role, Responder responder) {
    std::lock_guard lock(mu_);
    scripts_[role].responder = std::move(responder);
}

std::string ScriptedBackend::complete(const ModelRequest& request) {
    Responder responder;
    {
        std::lock_guard lock(mu_);
        RequestLogEntry entry{request.role, request.key, request.prompt, request.image.has_value(), {}, 0, 0};
        if (request.image) {
            entry.image_colorimetry = request.image->colorimetry;
            entry.image_width = request.image->width;
            entry.image_height = request.image->height;
        }
        log_.push_back(std::move(entry));

        Script& s = scripts_[request.role];
        if (!request.key.empty()) {
            if (auto it = s.keyed.find(request.key); it != s.keyed.end()) return it->second;
        }
        if (s.next < s.fifo.size()) return s.fifo[s.next++];
        responder = s.responder;
    }
    if (responder) return responder(request);
    fail(ErrorCode::FixtureExhausted, "scripted " + to_string(request.role) + " replies exhausted" +
                                          (request.key.empty() ? std::string() : " (request " + request.key + ")"));
}

bool ScriptedBackend::supports_concurrency() const {
    std::lock_guard lock(mu_);
    for (const auto& [role, s] : scripts_) {
        if ((role == Role::Critic || role == Role::Analyst) && s.next < s.fifo.size()) return false;
    }
    return true;
}

std::vector<RequestLogEntry> ScriptedBackend::request_log() const {
    std::lock_guard lock(mu_);
    return log_;
}

std::size_t ScriptedBackend::remaining(Role role) const {
    std::lock_guard lock(mu_);
    auto it = scripts_.find(role);
    return it == scripts_.end() ? 0 : it->second.fifo.size() - it->second.next;
}

nlohmann::json ScriptedBackend::cursor() const {
    std::lock_guard lock(mu_);
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [role, s] : scripts_) j[to_string(role)] = s.next;
    return j;
}

void ScriptedBackend::restore_cursor(const nlohmann::json& cursor) {
    std::lock_guard lock(mu_);
    for (const auto& [name, pos] : cursor.items()) {
        Script& s = scripts_[parse_role(name)];
        s.next = std::min<std::size_t>(pos.get<std::size_t>(), s.fifo.size());
    }
}

nlohmann::json extract_json(const std::string& text) {
    for (std::size_t start = 0; start < text.size(); ++start) {
        const char open = text[start];
        if (open != '{' && open != '[') continue;
        // Scan to the matching bracket, skipping string contents.
        int depth = 0;
        bool in_string = false, escaped = false;
        for (std::size_t i = start; i < text.size(); ++i) {
            const char c = text[i];
            if (in_string) {
                if (escaped) escaped = false;
                else if (c == '\\') escaped = true;
                else if (c == '"') in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            else if (c == '{' || c == '[') ++depth;
            else if (c == '}' || c == ']') {
                if (--depth == 0) {
                    auto parsed = nlohmann::json::parse(text.begin() + static_cast<std::ptrdiff_t>(start),
                                                        text.begin() + static_cast<std::ptrdiff_t>(i + 1), nullptr, false);
                    if (!parsed.is_discarded()) return parsed;
                    break;
                }
            }
        }
    }
    fail(ErrorCode::Parse, "no JSON value found in model reply");
}

std::string render_template(const std::string& tpl, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tpl.size());
    std::size_t pos = 0;
    while (pos < tpl.size()) {
        const auto open = tpl.find("{{", pos);
        if (open == std::string::npos) break;
        const auto close = tpl.find("}}", open + 2);
        if (close == std::string::npos) break;
        out.append(tpl, pos, open - pos);
        const std::string name = tpl.substr(open + 2, close - open - 2);
        if (auto it = values.find(name); it != values.end()) out += it->second;
        else out.append(tpl, open, close + 2 - open);
        pos = close + 2;
    }
    out.append(tpl, pos, std::string::npos);
    return out;
}

const std::string& prompt_template(Role role) {
    static const std::string analyst = assets::kSceneAnalystPrompt;
    static const std::string expander = assets::kExpanderPrompt;
    static const std::string critic = assets::kCriticPrompt;
    static const std::string reflector = assets::kReflectorPrompt;
    switch (role) {
    case Role::Analyst: return analyst;
    case Role::Expander: return expander;
    case Role::Critic: return critic;
    case Role::Reflector: return reflector;
    }
    return analyst;
}

} // namespace cdlgrade::agent
