#include "aita/http_api.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

namespace aita {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

json turn_to_json(const ConversationTurn& t) {
    return {{"turn_id", t.turn_id},
            {"query", t.query},
            {"reply", t.reply},
            {"citations", citations_to_json(t.citations)},
            {"timestamp", format_iso8601(t.timestamp)},
            {"degraded", t.degraded}};
}

json parse_body(const httplib::Request& req) {
    json body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) throw ServiceError(400, "request body must be a JSON object");
    return body;
}

template <typename F>
httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const ServiceError& e) {
            send_json(res, e.status(), {{"error", e.what()}});
        } catch (const json::exception& e) {
            send_json(res, 400, {{"error", std::string("bad request: ") + e.what()}});
        } catch (const std::exception& e) {
            spdlog::error("unhandled error on {}: {}", req.path, e.what());
            send_json(res, 500, {{"error", "internal error"}});
        }
    };
}

}  // namespace

HttpApi::HttpApi(ChatService& service, std::string admin_key)
    : service_(service), admin_key_(std::move(admin_key)), server_(std::make_unique<httplib::Server>()) {
    install_routes();
}

HttpApi::~HttpApi() {
    stop();
}

void HttpApi::install_routes() {
    auto& s = *server_;

    s.Post("/api/session", guarded([this](const httplib::Request& req, httplib::Response& res) {
               const json body = req.body.empty() ? json::object() : parse_body(req);
               const bool consent = body.value("consent", false);
               const auto info = service_.create_session(consent);
               send_json(res, 200, {{"token", info.token}, {"privacy_notice", info.privacy_notice}});
           }));

    s.Post("/api/chat", guarded([this](const httplib::Request& req, httplib::Response& res) {
               const json body = parse_body(req);
               if (!body.contains("token") || !body["token"].is_string()) throw ServiceError(401, "token missing");
               if (!body.contains("message") || !body["message"].is_string()) {
                   throw ServiceError(400, "message missing");
               }
               const auto r = service_.post_message(body["token"].get<std::string>(),
                                                    body["message"].get<std::string>());
               send_json(res, 200,
                         {{"turn_id", r.turn_id},
                          {"reply", r.reply},
                          {"citations", citations_to_json(r.citations)},
                          {"degraded", r.degraded},
                          {"privacy_notice", r.privacy_notice}});
           }));

    s.Get("/api/history", guarded([this](const httplib::Request& req, httplib::Response& res) {
              const auto token = req.get_param_value("token");
              json turns = json::array();
              for (const auto& t : service_.get_history(token)) turns.push_back(turn_to_json(t));
              send_json(res, 200, {{"turns", turns}});
          }));

    s.Post("/api/admin/snapshot", guarded([this](const httplib::Request& req, httplib::Response& res) {
               if (admin_key_.empty()) throw ServiceError(403, "admin endpoint disabled");
               if (req.get_header_value("X-Admin-Key") != admin_key_) throw ServiceError(403, "bad admin key");
               const json body = parse_body(req);
               service_.swap_snapshot_file(body.at("path").get<std::string>());
               const auto h = service_.health();
               send_json(res, 200,
                         {{"ok", true}, {"snapshot_hash", h.snapshot_hash}, {"snapshot_chunks", h.snapshot_chunks}});
           }));

    s.Get("/api/health", guarded([this](const httplib::Request&, httplib::Response& res) {
              const auto h = service_.health();
              send_json(res, 200,
                        {{"status", h.status},
                         {"snapshot_hash", h.snapshot_hash},
                         {"snapshot_chunks", h.snapshot_chunks},
                         {"uptime_s", h.uptime_s}});
          }));

    const auto& static_dir = service_.config().static_dir;
    if (!static_dir.empty() && !s.set_mount_point("/", static_dir)) {
        spdlog::warn("static directory {} not mounted", static_dir);
    }
}

int HttpApi::start(const std::string& host, int port) {
    port_ = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (port_ <= 0) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port_;
}

void HttpApi::listen(const std::string& host, int port) {
    port_ = port;
    spdlog::info("listening on {}:{}", host, port);
    if (!server_->listen(host, port)) throw ConfigError("cannot listen on " + host + ":" + std::to_string(port));
}

void HttpApi::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace aita
