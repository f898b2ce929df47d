#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace aita {

enum class Role { system, user, assistant };

std::string_view to_string(Role role);
Role role_from_string(std::string_view s);

struct Message {
    Role role = Role::user;
    std::string content;

    bool operator==(const Message&) const = default;
};

struct ChatRequest {
    std::vector<Message> messages;
    std::string model_id;
    double temperature = 0.2;
    int max_output_tokens = 1024;

    bool operator==(const ChatRequest&) const = default;
};

/// Throws PreconditionError unless: messages non-empty, the first is `system`,
/// the rest alternate user/assistant starting with user, temperature in [0,2],
/// max_output_tokens > 0.
void validate(const ChatRequest& request);

/// OpenAI-compatible chat-completions body: exactly model, messages, temperature, max_tokens.
nlohmann::json to_wire(const ChatRequest& request);
ChatRequest chat_request_from_wire(const nlohmann::json& body);

struct ChatResponse {
    std::string content;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
};

using Embedding = std::vector<double>;

struct TokenUsage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
};

/// Prices per 1000 tokens, in whatever currency the deployment is billed in.
struct PriceTable {
    double in_per_1k = 0.0;
    double out_per_1k = 0.0;

    static PriceTable from_json(const nlohmann::json& j);
};

/// Σ(prompt/1000·in + completion/1000·out), rounded to 6 decimal places.
/// Throws PreconditionError on negative prices or token counts.
double count_cost(std::span<const TokenUsage> usage, const PriceTable& prices);

// ---------------------------------------------------------------------------
// Backends

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatResponse complete(const ChatRequest& request) = 0;
};

class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    virtual std::vector<Embedding> embed(const std::vector<std::string>& texts) = 0;
    virtual std::size_t dimension() const = 0;
};

/// Replies with the last user message verbatim.
class EchoChatBackend final : public ChatBackend {
public:
    ChatResponse complete(const ChatRequest& request) override;
};

/// Canned replies keyed on the last user message. An exact (trimmed) match wins;
/// otherwise the first key that occurs case-insensitively inside the message;
/// otherwise the fallback reply.
class ScriptedChatBackend final : public ChatBackend {
public:
    using Table = std::vector<std::pair<std::string, std::string>>;

    explicit ScriptedChatBackend(Table table, std::string fallback = "I do not have an answer for that yet.");
    ChatResponse complete(const ChatRequest& request) override;

private:
    Table table_;
    std::string fallback_;
};

/// Replies computed by an arbitrary function of the request. Token counts follow
/// the same word-count convention as the other mocks.
class CallbackChatBackend final : public ChatBackend {
public:
    using Fn = std::function<std::string(const ChatRequest&)>;

    explicit CallbackChatBackend(Fn fn) : fn_(std::move(fn)) {}
    ChatResponse complete(const ChatRequest& request) override;

private:
    Fn fn_;
};

/// Deterministic offline embedder: each index term adds 1 to bucket
/// fnv1a64(term) mod D, and the result is scaled to unit Euclidean norm.
/// Text without any index term hashes its trimmed form as a single term.
class MockEmbedder final : public EmbeddingBackend {
public:
    explicit MockEmbedder(std::size_t dimension);

    std::vector<Embedding> embed(const std::vector<std::string>& texts) override;
    std::size_t dimension() const override { return dimension_; }

    Embedding embed_one(std::string_view text) const;

private:
    std::size_t dimension_;
};

struct HttpEndpoint {
    std::string base_url;   // e.g. "https://api.openai.com/v1" or "http://127.0.0.1:8080/v1"
    std::string api_key;    // sent as a Bearer token when non-empty
    std::chrono::milliseconds timeout{30000};
};

/// POST {base}/chat/completions.
class OpenAIChatBackend final : public ChatBackend {
public:
    explicit OpenAIChatBackend(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}
    ChatResponse complete(const ChatRequest& request) override;

private:
    HttpEndpoint endpoint_;
};

/// POST {base}/embeddings.
class OpenAIEmbeddingBackend final : public EmbeddingBackend {
public:
    OpenAIEmbeddingBackend(HttpEndpoint endpoint, std::string model_id, std::size_t dimension)
        : endpoint_(std::move(endpoint)), model_id_(std::move(model_id)), dimension_(dimension) {}

    std::vector<Embedding> embed(const std::vector<std::string>& texts) override;
    std::size_t dimension() const override { return dimension_; }

private:
    HttpEndpoint endpoint_;
    std::string model_id_;
    std::size_t dimension_;
};

// ---------------------------------------------------------------------------
// Gateway

struct RetryPolicy {
    int max_retries = 2;
    std::chrono::milliseconds base_delay{250};
    /// Replaceable so tests don't actually sleep.
    std::function<void(std::chrono::milliseconds)> sleep;
};

struct UsageTotals {
    std::int64_t calls = 0;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
};

/// Front door for all model traffic. Validates requests, retries retriable
/// failures with exponential backoff (never FilteredError or ConfigError),
/// and keeps running token totals. Safe for concurrent use if the backends are.
class Gateway {
public:
    Gateway(std::shared_ptr<ChatBackend> chat, std::shared_ptr<EmbeddingBackend> embedder,
            RetryPolicy retry = {});

    ChatResponse chat(const ChatRequest& request);

    /// Throws PreconditionError for an empty list or a blank text.
    std::vector<Embedding> embed(const std::vector<std::string>& texts);

    std::size_t embedding_dimension() const { return embedder_->dimension(); }
    UsageTotals usage() const;

private:
    template <typename F>
    auto with_retry(F&& call) -> decltype(call());

    std::shared_ptr<ChatBackend> chat_;
    std::shared_ptr<EmbeddingBackend> embedder_;
    RetryPolicy retry_;
    std::atomic<std::int64_t> calls_{0};
    std::atomic<std::int64_t> prompt_tokens_{0};
    std::atomic<std::int64_t> completion_tokens_{0};
};

enum class BackendKind { live, mock_echo, mock_scripted };

BackendKind backend_kind_from_string(std::string_view s);

/// Deployment settings for the gateway. Keys mirror the JSON config file.
struct BackendConfig {
    BackendKind backend = BackendKind::mock_echo;
    std::string base_url = "https://api.openai.com/v1";
    std::string api_key_env = "OPENAI_API_KEY";
    std::string model_id = "gpt-4o-mini";
    std::string embedding_model_id = "text-embedding-ada-002";
    std::size_t embedding_dim = 1536;
    double temperature = 0.2;
    int max_output_tokens = 1024;
    PriceTable prices;
    int timeout_ms = 30000;
    int max_retries = 2;
    ScriptedChatBackend::Table scripted_replies;
    std::string scripted_fallback = "I do not have an answer for that yet.";

    static BackendConfig from_json(const nlohmann::json& j);
};

/// Live backends read the API key from the environment variable named in the config.
std::shared_ptr<Gateway> make_gateway(const BackendConfig& config);

}  // namespace aita
