#pragma once

#include <memory>
#include <string>
#include <thread>

#include "aita/chat_service.hpp"

namespace httplib {
class Server;
}

namespace aita {

/// JSON API in front of a ChatService:
///   POST /api/session          {"consent": true}            -> {token, privacy_notice}
///   POST /api/chat             {"token", "message"}         -> {turn_id, reply, citations, degraded, privacy_notice}
///   GET  /api/history?token=                                -> {turns: [...]}
///   POST /api/admin/snapshot   {"path"} + X-Admin-Key       -> health
///   GET  /api/health
/// Errors are {"error": message} with the ServiceError status.
class HttpApi {
public:
    /// `admin_key` empty disables the admin route (403).
    HttpApi(ChatService& service, std::string admin_key);
    ~HttpApi();

    HttpApi(const HttpApi&) = delete;
    HttpApi& operator=(const HttpApi&) = delete;

    /// Binds (port 0 picks a free port) and serves on a background thread.
    int start(const std::string& host, int port);
    /// Blocks in the calling thread.
    void listen(const std::string& host, int port);
    void stop();

    int port() const { return port_; }

private:
    void install_routes();

    ChatService& service_;
    std::string admin_key_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = 0;
};

}  // namespace aita
