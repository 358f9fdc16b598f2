#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cdlgrade/agent/backend.hpp"
#include "cdlgrade/agent/knowledge.hpp"
#include "cdlgrade/agent/reflection.hpp"
#include "cdlgrade/error.hpp"
#include "cdlgrade/lut.hpp"
#include "cdlgrade/render.hpp"
#include "cdlgrade/service/config.hpp"

namespace cdlgrade::service {

struct CreateRequest {
    std::filesystem::path source; // frame file or clip directory
    std::string curve = "slog3";
    std::string gamut = "sgamut3cine";
    std::optional<std::string> directive;
};

struct ExportBundle {
    int iteration = 0;
    std::string basename; // "<id>_iter<t>"
    std::string cube;
    std::string cdl_xml;
    nlohmann::json report;
    std::filesystem::path cube_path;
    std::filesystem::path cdl_path;
    std::filesystem::path report_path;
};

// Session workflows shared by the HTTP service and the CLI. Sessions live in
// `<sessions_dir>/<id>/` and are rewritten atomically after every step.
class Engine {
public:
    // Builds backends from the config (scripted fixture or HTTP clients).
    explicit Engine(EngineConfig cfg);
    // Injected backends; nothing is read from the fixture path.
    Engine(EngineConfig cfg, std::shared_ptr<agent::ModelBackend> model, std::shared_ptr<agent::EmbedBackend> embedder);

    std::string create_session(const CreateRequest& request);
    nlohmann::json grade(const std::string& id);
    nlohmann::json feedback(const std::string& id, const std::string& text);

    nlohmann::json state(const std::string& id) const;
    nlohmann::json tree(const std::string& id) const;
    agent::GradingSession load(const std::string& id) const;
    std::vector<std::string> list_sessions() const;

    // Latest iteration when none is given. Writes the three files under
    // `<session>/exports/`.
    ExportBundle export_artifacts(const std::string& id, std::optional<int> iteration = std::nullopt);
    lut::Lut3D compile(const std::string& id, std::optional<int> iteration = std::nullopt) const;

    // 8-bit PNG of the anchor preview graded at `iteration`; -1 is ungraded.
    // `long_edge` shrinks it further.
    std::vector<unsigned char> preview_png(const std::string& id, std::optional<int> iteration = std::nullopt,
                                           std::optional<int> long_edge = std::nullopt) const;

    render::ClipReport render(const std::string& id, std::optional<int> iteration, const std::filesystem::path& clip_dir,
                              const std::filesystem::path& out_dir, unsigned workers = 0) const;

    const EngineConfig& config() const { return cfg_; }
    agent::ModelBackend& backend() { return *model_; }
    // Null unless the backend is scripted.
    agent::ScriptedBackend* scripted() const { return scripted_; }

private:
    std::filesystem::path session_dir(const std::string& id) const;
    void save(const agent::GradingSession& s) const;
    std::mutex& session_mutex(const std::string& id);
    const agent::HeuristicStore* store();
    void save_cursor();
    int resolve_iteration(const agent::GradingSession& s, std::optional<int> iteration) const;
    lut::Lut3D compile(const agent::GradingSession& s, int iteration) const;
    Frame ungraded_preview(const agent::GradingSession& s) const;
    void write_preview(const agent::GradingSession& s, int iteration) const;
    ExportBundle export_locked(const agent::GradingSession& s, std::optional<int> iteration) const;
    nlohmann::json state_of(const agent::GradingSession& s) const;

    EngineConfig cfg_;
    std::shared_ptr<agent::ModelBackend> model_;
    std::shared_ptr<agent::EmbedBackend> embedder_;
    agent::ScriptedBackend* scripted_ = nullptr;
    bool persist_cursor_ = false;
    std::optional<agent::RetrievalRules> rules_;

    std::mutex store_mu_;
    std::optional<agent::HeuristicStore> store_;
    std::mutex sessions_mu_;
    std::map<std::string, std::unique_ptr<std::mutex>> session_locks_;
    std::mutex cursor_mu_;
};

// Maps an error code to an HTTP status.
int http_status(ErrorCode code);

nlohmann::json error_body(ErrorCode code, const std::string& message);

} // namespace cdlgrade::service
