#pragma once

#include <string>
#include <vector>

#include "cdlgrade/agent/backend.hpp"
#include "cdlgrade/agent/knowledge.hpp"

namespace cdlgrade::agent {

struct Endpoint {
    std::string url; // full URL of the chat-completions or embeddings route
    std::string key;
    std::string model;
    int timeout_seconds = 120;
};

// Splits "https://host:port/path" into ("https://host:port", "/path").
std::pair<std::string, std::string> split_url(const std::string& url);

std::string base64_encode(const std::vector<unsigned char>& bytes);

// Chat-completions request body: one user message whose content is the prompt
// plus, when present, the image as an inline base64 PNG data URL.
nlohmann::json chat_request_body(const ModelRequest& request, const std::string& model);
// choices[0].message.content, as text. Throws Backend.
std::string chat_reply_text(const nlohmann::json& response);

// Vision roles (analyst, critic) go to `vlm`; text roles to `llm`.
class HttpChatBackend : public ModelBackend {
public:
    HttpChatBackend(Endpoint llm, Endpoint vlm);
    std::string complete(const ModelRequest& request) override;
    std::string identity() const override;

private:
    Endpoint llm_;
    Endpoint vlm_;
};

// POST {"model", "input"} -> data[0].embedding.
class HttpEmbedBackend : public EmbedBackend {
public:
    explicit HttpEmbedBackend(Endpoint endpoint);
    std::vector<double> embed(const std::string& text) override;
    std::string identity() const override;

private:
    Endpoint endpoint_;
};

} // namespace cdlgrade::agent
