#include "cdlgrade/service/server.hpp"

#include <charconv>

#include "httplib.h"

#include "cdlgrade/error.hpp"

namespace cdlgrade::service {

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(2) + "\n", "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
    send_json(res, http_status(code), error_body(code, message));
}

std::optional<int> int_param(const httplib::Request& req, const char* name) {
    if (!req.has_param(name)) return std::nullopt;
    const std::string v = req.get_param_value(name);
    int out = 0;
    const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || end != v.data() + v.size()) {
        fail(ErrorCode::InvalidInput, std::string("query parameter '") + name + "' must be an integer, got '" + v + "'");
    }
    return out;
}

nlohmann::json json_body(const httplib::Request& req) {
    if (req.body.empty()) return nlohmann::json::object();
    auto j = nlohmann::json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) fail(ErrorCode::Parse, "request body must be a JSON object");
    return j;
}

std::string string_field(const nlohmann::json& j, const char* key, bool required) {
    if (!j.contains(key) || j[key].is_null()) {
        if (required) fail(ErrorCode::InvalidInput, std::string("missing field '") + key + "'");
        return {};
    }
    if (!j[key].is_string()) fail(ErrorCode::InvalidInput, std::string("field '") + key + "' must be a string");
    return j[key].get<std::string>();
}

// Runs a handler and turns exceptions into error bodies.
template <typename F>
httplib::Server::Handler guarded(F fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
        try {
            fn(req, res);
        } catch (const Error& e) {
            send_error(res, e.code(), e.what());
        } catch (const std::exception& e) {
            send_error(res, ErrorCode::Internal, e.what());
        }
    };
}

} // namespace

HttpService::HttpService(Engine& engine) : engine_(engine), server_(std::make_unique<httplib::Server>()) { routes(); }

HttpService::~HttpService() = default;

int HttpService::bind(const std::string& host, int port) {
    const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) fail(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
    return bound;
}

void HttpService::listen() { server_->listen_after_bind(); }

void HttpService::stop() { server_->stop(); }

bool HttpService::running() const { return server_->is_running(); }

void HttpService::routes() {
    auto& s = *server_;
    s.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                           {"Access-Control-Allow-Headers", "Content-Type"}});
    s.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    s.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
        if (!res.body.empty()) return;
        if (res.status == 404) send_error(res, ErrorCode::NotFound, "no route for " + req.method + " " + req.path);
        else if (res.status == 405) send_json(res, 405, error_body(ErrorCode::InvalidInput, "method not allowed"));
    });

    s.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
               const auto body = json_body(req);
               CreateRequest cr;
               cr.source = string_field(body, "source", true);
               if (auto v = string_field(body, "curve", false); !v.empty()) cr.curve = v;
               if (auto v = string_field(body, "gamut", false); !v.empty()) cr.gamut = v;
               if (body.contains("directive") && !body["directive"].is_null()) cr.directive = string_field(body, "directive", true);
               const std::string id = engine_.create_session(cr);
               send_json(res, 201, engine_.state(id));
           }));

    s.Post(R"(/sessions/([^/]+)/grade)", guarded([this](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, engine_.grade(req.matches[1]));
           }));

    s.Post(R"(/sessions/([^/]+)/feedback)", guarded([this](const httplib::Request& req, httplib::Response& res) {
               const auto body = json_body(req);
               std::string text = string_field(body, "text", false);
               if (text.empty()) text = string_field(body, "feedback", true);
               send_json(res, 200, engine_.feedback(req.matches[1], text));
           }));

    s.Get(R"(/sessions/([^/]+)/state)", guarded([this](const httplib::Request& req, httplib::Response& res) {
              send_json(res, 200, engine_.state(req.matches[1]));
          }));

    s.Get(R"(/sessions/([^/]+)/tree)", guarded([this](const httplib::Request& req, httplib::Response& res) {
              send_json(res, 200, engine_.tree(req.matches[1]));
          }));

    s.Get(R"(/sessions/([^/]+)/preview)", guarded([this](const httplib::Request& req, httplib::Response& res) {
              const auto png = engine_.preview_png(req.matches[1], int_param(req, "iteration"), int_param(req, "size"));
              res.set_content(std::string(png.begin(), png.end()), "image/png");
              res.set_header("Cache-Control", "no-cache");
          }));

    s.Get(R"(/sessions/([^/]+)/export/(cube|cdl|report))", guarded([this](const httplib::Request& req, httplib::Response& res) {
              const auto bundle = engine_.export_artifacts(req.matches[1], int_param(req, "iteration"));
              const std::string kind = req.matches[2];
              std::string filename;
              if (kind == "cube") {
                  filename = bundle.basename + ".cube";
                  res.set_content(bundle.cube, "text/plain; charset=utf-8");
              } else if (kind == "cdl") {
                  filename = bundle.basename + ".cdl";
                  res.set_content(bundle.cdl_xml, "application/xml");
              } else {
                  filename = bundle.basename + "_report.json";
                  res.set_content(bundle.report.dump(2) + "\n", "application/json");
              }
              res.set_header("Content-Disposition", "attachment; filename=\"" + filename + "\"");
              res.set_header("Access-Control-Expose-Headers", "Content-Disposition");
          }));
}

} // namespace cdlgrade::service
