#pragma once

#include <chrono>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "aita/errors.hpp"
#include "aita/gateway.hpp"
#include "aita/orchestrator.hpp"
#include "aita/snapshot.hpp"
#include "aita/store.hpp"

namespace aita {

/// Error carrying the HTTP status class it maps to.
class ServiceError : public Error {
public:
    ServiceError(int status, const std::string& message) : Error(message), status_(status) {}
    int status() const noexcept { return status_; }

private:
    int status_;
};

inline constexpr const char* kDefaultPrivacyNotice =
    "Do not disclose any information which could identify an individual";

struct ServiceConfig {
    std::string bind_address = "127.0.0.1";
    int port = 8080;
    std::string admin_key_env = "AITA_ADMIN_KEY";
    std::size_t history_limit = 10;
    std::size_t k = 10;
    std::string template_path;    // empty → built-in template
    std::string directives_path;  // empty → built-in directives
    std::string rules_path;       // empty → no rewrite rules
    std::string privacy_notice = kDefaultPrivacyNotice;
    std::string consent_text =
        "Please read the participant information leaflet and tick the box to confirm you have read it "
        "before using the assistant.";
    std::string database_path = "aita.db";
    std::int64_t session_ttl_s = 0;  // 0 = sessions never expire
    int messages_per_minute = 0;     // 0 = unlimited
    std::size_t max_message_chars = 4000;
    std::string telemetry_log_path;  // JSON-lines mirror of the query log; empty = off
    bool retain_query_text = false;  // adds the raw query to the JSON-lines mirror
    std::string static_dir;          // optional web client
    BackendConfig gateway;

    /// Relative paths are resolved against `base_dir`.
    static ServiceConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
    static ServiceConfig load(const std::filesystem::path& path);
};

struct SessionInfo {
    std::string token;
    std::string privacy_notice;
};

struct PostResult {
    int turn_id = 0;
    std::string reply;
    std::vector<Citation> citations;
    bool degraded = false;
    std::string privacy_notice;
};

struct Health {
    std::string status;
    std::string snapshot_hash;
    std::size_t snapshot_chunks = 0;
    std::int64_t uptime_s = 0;
};

/// Anonymous multi-session tutor service. Turns within one session are
/// serialized; distinct sessions run concurrently against a shared immutable
/// snapshot. Each turn is persisted (with its log record) before it is returned.
class ChatService {
public:
    ChatService(ServiceConfig config, std::shared_ptr<ConversationStore> store, std::shared_ptr<Gateway> gateway,
                PromptTemplate prompt_template, std::vector<SafetyRewriteRule> rules,
                std::shared_ptr<const IndexSnapshot> snapshot, Clock clock = now_utc);

    /// Throws ServiceError(403) carrying the consent text when consent is false.
    SessionInfo create_session(bool consent);

    /// 400 for empty or oversized text, 401 for an unknown or expired token,
    /// 429 over the per-minute cap, 500 if answering or persisting fails (the
    /// turn is then not recorded).
    PostResult post_message(const std::string& token, std::string_view text);

    /// Every persisted turn, in turn_id order. 401 for an unknown token.
    std::vector<ConversationTurn> get_history(const std::string& token);

    /// Atomic replacement. Turns already running finish on the snapshot they
    /// started with. Invalid snapshots are rejected with ServiceError(400).
    void swap_snapshot(std::shared_ptr<const IndexSnapshot> snapshot);
    void swap_snapshot_file(const std::filesystem::path& path);

    std::shared_ptr<const IndexSnapshot> snapshot() const;
    Health health() const;

    const ServiceConfig& config() const { return config_; }

private:
    struct SessionSlot {
        std::mutex mu;
        SessionState state;
        TimePoint created_at{};
        std::deque<TimePoint> recent_posts;
    };

    std::shared_ptr<SessionSlot> find_slot(const std::string& token);
    void mirror_log(const QueryLogRecord& record, const ConversationTurn& turn);

    ServiceConfig config_;
    std::shared_ptr<ConversationStore> store_;
    std::shared_ptr<Gateway> gateway_;
    PromptTemplate template_;
    std::vector<SafetyRewriteRule> rules_;
    OrchestratorConfig orchestrator_;
    Clock clock_;
    std::chrono::steady_clock::time_point started_;

    mutable std::mutex snapshot_mu_;
    std::shared_ptr<const IndexSnapshot> snapshot_;

    std::shared_mutex sessions_mu_;
    std::unordered_map<std::string, std::shared_ptr<SessionSlot>> sessions_;

    std::mutex log_mu_;
};

/// Builds store, gateway, template and rules from a config and a snapshot file.
std::unique_ptr<ChatService> make_service(const ServiceConfig& config, const std::filesystem::path& snapshot_path);

}  // namespace aita
