#pragma once

#include <memory>
#include <string>

#include "cdlgrade/service/engine.hpp"

namespace httplib {
class Server;
}

namespace cdlgrade::service {

// HTTP front end over an Engine. Errors come back as
// {"error": {"code": "...", "message": "..."}} with a mapped status.
class HttpService {
public:
    explicit HttpService(Engine& engine);
    ~HttpService();

    // Binds; port 0 picks a free one. Returns the bound port.
    int bind(const std::string& host, int port);
    // Blocks until stop().
    void listen();
    void stop();
    bool running() const;

private:
    void routes();

    Engine& engine_;
    std::unique_ptr<httplib::Server> server_;
};

} // namespace cdlgrade::service
