#include "httplib.h"

#include "cdlgrade/agent/live.hpp"

#include <openssl/evp.h>

#include "cdlgrade/error.hpp"
#include "cdlgrade/image_io.hpp"

namespace cdlgrade::agent {

namespace {

nlohmann::json post_json(const Endpoint& ep, const nlohmann::json& body) {
    const auto [origin, path] = split_url(ep.url);
    httplib::Client client(origin);
    client.set_connection_timeout(ep.timeout_seconds, 0);
    client.set_read_timeout(ep.timeout_seconds, 0);
    client.set_write_timeout(ep.timeout_seconds, 0);
    httplib::Headers headers;
    if (!ep.key.empty()) headers.emplace("Authorization", "Bearer " + ep.key);
    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) fail(ErrorCode::Backend, "request to " + ep.url + " failed: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300) {
        fail(ErrorCode::Backend, "request to " + ep.url + " returned HTTP " + std::to_string(res->status) + ": " +
                                     res->body.substr(0, 300));
    }
    auto j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_discarded()) fail(ErrorCode::Backend, "response from " + ep.url + " is not JSON");
    return j;
}

} // namespace

std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) fail(ErrorCode::Config, "endpoint '" + url + "' needs an http:// or https:// scheme");
    const auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, "/"};
    return {url.substr(0, slash), url.substr(slash)};
}

std::string base64_encode(const std::vector<unsigned char>& bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

nlohmann::json chat_request_body(const ModelRequest& request, const std::string& model) {
    nlohmann::json content = nlohmann::json::array();
    content.push_back({{"type", "text"}, {"text", request.prompt}});
    if (request.image) {
        const auto png = io::encode_png(io::quantize(*request.image, 255));
        content.push_back({{"type", "image_url"}, {"image_url", {{"url", "data:image/png;base64," + base64_encode(png)}}}});
    }
    nlohmann::json body{{"messages", {{{"role", "user"}, {"content", content}}}}, {"temperature", 0}};
    if (!model.empty()) body["model"] = model;
    return body;
}

std::string chat_reply_text(const nlohmann::json& response) {
    try {
        const auto& content = response.at("choices").at(0).at("message").at("content");
        if (content.is_string()) return content.get<std::string>();
        // Some servers return a list of content parts.
        std::string text;
        for (const auto& part : content) {
            if (part.value("type", "") == "text") text += part.value("text", "");
        }
        return text;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Backend, std::string("unexpected chat response shape: ") + e.what());
    }
}

HttpChatBackend::HttpChatBackend(Endpoint llm, Endpoint vlm) : llm_(std::move(llm)), vlm_(std::move(vlm)) {
    for (const Endpoint* ep : {&llm_, &vlm_}) {
        if (ep->url.empty()) fail(ErrorCode::Config, "live mode needs LUMI_LLM_ENDPOINT and LUMI_VLM_ENDPOINT");
        (void)split_url(ep->url);
    }
}

std::string HttpChatBackend::complete(const ModelRequest& request) {
    const bool vision = request.role == Role::Analyst || request.role == Role::Critic;
    const Endpoint& ep = vision ? vlm_ : llm_;
    return chat_reply_text(post_json(ep, chat_request_body(request, ep.model)));
}

std::string HttpChatBackend::identity() const { return "http-chat(" + llm_.model + "," + vlm_.model + ")"; }

HttpEmbedBackend::HttpEmbedBackend(Endpoint endpoint) : endpoint_(std::move(endpoint)) {
    if (endpoint_.url.empty()) fail(ErrorCode::Config, "live embedding needs LUMI_EMBED_ENDPOINT");
    (void)split_url(endpoint_.url);
}

std::vector<double> HttpEmbedBackend::embed(const std::string& text) {
    nlohmann::json body{{"input", text}};
    if (!endpoint_.model.empty()) body["model"] = endpoint_.model;
    const auto res = post_json(endpoint_, body);
    try {
        return res.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Backend, std::string("unexpected embedding response shape: ") + e.what());
    }
}

std::string HttpEmbedBackend::identity() const {
    return "http-embed:" + (endpoint_.model.empty() ? endpoint_.url : endpoint_.model);
}

} // namespace cdlgrade::agent
