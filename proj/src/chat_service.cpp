#include "aita/chat_service.hpp"

#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "aita/hashing.hpp"
#include "aita/text.hpp"

namespace aita {

using nlohmann::json;

namespace {

std::string resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty() || base.empty() || std::filesystem::path(p).is_absolute() || p == ":memory:") return p;
    return (base / p).string();
}

}  // namespace

ServiceConfig ServiceConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
    ServiceConfig c;
    try {
        c.bind_address = j.value("bind_address", c.bind_address);
        c.port = j.value("port", c.port);
        c.admin_key_env = j.value("admin_key_env", c.admin_key_env);
        c.history_limit = j.value("history_limit", c.history_limit);
        c.k = j.value("k", c.k);
        c.template_path = resolve(base_dir, j.value("template_path", c.template_path));
        c.directives_path = resolve(base_dir, j.value("directives_path", c.directives_path));
        c.rules_path = resolve(base_dir, j.value("rules_path", c.rules_path));
        c.privacy_notice = j.value("privacy_notice", c.privacy_notice);
        c.consent_text = j.value("consent_text", c.consent_text);
        c.database_path = resolve(base_dir, j.value("database_path", c.database_path));
        c.session_ttl_s = j.value("session_ttl_s", c.session_ttl_s);
        c.messages_per_minute = j.value("messages_per_minute", c.messages_per_minute);
        c.max_message_chars = j.value("max_message_chars", c.max_message_chars);
        c.telemetry_log_path = resolve(base_dir, j.value("telemetry_log_path", c.telemetry_log_path));
        c.retain_query_text = j.value("retain_query_text", c.retain_query_text);
        c.static_dir = resolve(base_dir, j.value("static_dir", c.static_dir));
        if (j.contains("gateway")) c.gateway = BackendConfig::from_json(j["gateway"]);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid service config: ") + e.what());
    }
    if (c.history_limit == 0) throw ConfigError("history_limit must be at least 1");
    if (c.k == 0) throw ConfigError("k must be positive");
    return c;
}

ServiceConfig ServiceConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const json j = json::parse(ss.str(), nullptr, false);
    if (j.is_discarded()) throw ConfigError(path.string() + " is not valid JSON");
    return from_json(j, path.parent_path());
}

ChatService::ChatService(ServiceConfig config, std::shared_ptr<ConversationStore> store,
                         std::shared_ptr<Gateway> gateway, PromptTemplate prompt_template,
                         std::vector<SafetyRewriteRule> rules, std::shared_ptr<const IndexSnapshot> snapshot,
                         Clock clock)
    : config_(std::move(config)),
      store_(std::move(store)),
      gateway_(std::move(gateway)),
      template_(std::move(prompt_template)),
      rules_(std::move(rules)),
      clock_(std::move(clock)),
      started_(std::chrono::steady_clock::now()) {
    if (!store_ || !gateway_) throw ConfigError("chat service needs a store and a gateway");
    validate_rules(rules_);
    orchestrator_.history_limit = config_.history_limit;
    orchestrator_.retrieval.k = config_.k;
    orchestrator_.model.model_id = config_.gateway.model_id;
    orchestrator_.model.temperature = config_.gateway.temperature;
    orchestrator_.model.max_output_tokens = config_.gateway.max_output_tokens;
    swap_snapshot(snapshot ? std::move(snapshot) : IndexSnapshot::empty(clock_()));
}

SessionInfo ChatService::create_session(bool consent) {
    if (!consent) throw ServiceError(403, config_.consent_text);
    StoredSession s{random_urlsafe_token(16), clock_(), true};
    store_->create_session(s);

    auto slot = std::make_shared<SessionSlot>();
    slot->state.token = s.token;
    slot->created_at = s.created_at;
    {
        std::unique_lock lock(sessions_mu_);
        sessions_.emplace(s.token, std::move(slot));
    }
    return {s.token, config_.privacy_notice};
}

std::shared_ptr<ChatService::SessionSlot> ChatService::find_slot(const std::string& token) {
    std::shared_ptr<SessionSlot> slot;
    {
        std::shared_lock lock(sessions_mu_);
        if (const auto it = sessions_.find(token); it != sessions_.end()) slot = it->second;
    }
    if (!slot) {
        const auto stored = token.empty() ? std::nullopt : store_->find_session(token);
        if (!stored || !stored->consent_acknowledged) throw ServiceError(401, "unknown session token");
        auto fresh = std::make_shared<SessionSlot>();
        fresh->state.token = token;
        fresh->state.turns = store_->turns(token);
        fresh->created_at = stored->created_at;
        std::unique_lock lock(sessions_mu_);
        slot = sessions_.try_emplace(token, std::move(fresh)).first->second;
    }
    if (config_.session_ttl_s > 0 && clock_() - slot->created_at > std::chrono::seconds(config_.session_ttl_s)) {
        throw ServiceError(401, "session expired");
    }
    return slot;
}

PostResult ChatService::post_message(const std::string& token, std::string_view message) {
    if (text::is_blank(message)) throw ServiceError(400, "message is empty");
    if (text::code_point_length(message) > config_.max_message_chars) {
        throw ServiceError(400, "message exceeds " + std::to_string(config_.max_message_chars) + " characters");
    }
    auto slot = find_slot(token);

    std::lock_guard session_lock(slot->mu);
    const auto now = clock_();
    if (config_.messages_per_minute > 0) {
        while (!slot->recent_posts.empty() && now - slot->recent_posts.front() >= std::chrono::minutes(1)) {
            slot->recent_posts.pop_front();
        }
        if (static_cast<int>(slot->recent_posts.size()) >= config_.messages_per_minute) {
            throw ServiceError(429, "too many messages; please wait a moment");
        }
    }

    const auto snap = snapshot();
    TurnOutcome outcome;
    try {
        outcome = handle_turn(slot->state, message, *snap, template_, rules_, *gateway_, now, orchestrator_);
    } catch (const std::exception& e) {
        spdlog::error("turn failed: {}", e.what());
        throw ServiceError(500, "the assistant could not answer right now");
    }
    try {
        store_->append_turn(token, outcome.turn, outcome.log_record);
    } catch (const std::exception& e) {
        slot->state.turns.pop_back();
        spdlog::error("persisting turn failed: {}", e.what());
        throw ServiceError(500, "the assistant could not save this exchange");
    }
    slot->recent_posts.push_back(now);
    mirror_log(outcome.log_record, outcome.turn);

    const auto& t = outcome.turn;
    return {t.turn_id, t.reply, t.citations, t.degraded, config_.privacy_notice};
}

void ChatService::mirror_log(const QueryLogRecord& record, const ConversationTurn& turn) {
    if (config_.telemetry_log_path.empty()) return;
    auto j = to_json(record);
    if (config_.retain_query_text) j["query"] = turn.query;
    std::lock_guard lock(log_mu_);
    std::ofstream out(config_.telemetry_log_path, std::ios::app);
    if (!out) {
        spdlog::warn("cannot append to telemetry log {}", config_.telemetry_log_path);
        return;
    }
    out << j.dump() << '\n';
}

std::vector<ConversationTurn> ChatService::get_history(const std::string& token) {
    auto slot = find_slot(token);
    std::lock_guard lock(slot->mu);
    return store_->turns(token);
}

void ChatService::swap_snapshot(std::shared_ptr<const IndexSnapshot> next) {
    if (!next) throw ServiceError(400, "no snapshot supplied");
    try {
        next->validate();
    } catch (const std::exception& e) {
        throw ServiceError(400, std::string("snapshot rejected: ") + e.what());
    }
    if (!next->is_empty() && next->embedding_dim() != gateway_->embedding_dimension()) {
        throw ServiceError(400, "snapshot embedding dimension " + std::to_string(next->embedding_dim()) +
                                    " does not match the gateway's " +
                                    std::to_string(gateway_->embedding_dimension()));
    }
    std::lock_guard lock(snapshot_mu_);
    snapshot_ = std::move(next);
    spdlog::info("serving snapshot {} ({} chunks)", snapshot_->content_hash().substr(0, 12), snapshot_->size());
}

void ChatService::swap_snapshot_file(const std::filesystem::path& path) {
    std::shared_ptr<const IndexSnapshot> next;
    try {
        next = IndexSnapshot::load(path);
    } catch (const std::exception& e) {
        throw ServiceError(400, std::string("snapshot rejected: ") + e.what());
    }
    swap_snapshot(std::move(next));
}

std::shared_ptr<const IndexSnapshot> ChatService::snapshot() const {
    std::lock_guard lock(snapshot_mu_);
    return snapshot_;
}

Health ChatService::health() const {
    const auto snap = snapshot();
    return {"ok", snap->content_hash(), snap->size(),
            std::chrono::duration_cast<std::chrono::seconds>(std::chrono::steady_clock::now() - started_).count()};
}

std::unique_ptr<ChatService> make_service(const ServiceConfig& config, const std::filesystem::path& snapshot_path) {
    auto store = std::make_shared<SqliteStore>(config.database_path);
    auto gateway = make_gateway(config.gateway);
    PromptTemplate prompt_template = PromptTemplate::builtin();
    if (!config.template_path.empty()) {
        prompt_template = config.directives_path.empty()
                              ? PromptTemplate::load(config.template_path)
                              : PromptTemplate::load(config.template_path, config.directives_path);
    }
    std::vector<SafetyRewriteRule> rules;
    if (!config.rules_path.empty()) rules = load_rewrite_rules(config.rules_path);
    auto snapshot = IndexSnapshot::load(snapshot_path);
    return std::make_unique<ChatService>(config, std::move(store), std::move(gateway), std::move(prompt_template),
                                         std::move(rules), std::move(snapshot));
}

}  // namespace aita
