#include "aita/gateway.hpp"

#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "aita/errors.hpp"
#include "aita/hashing.hpp"
#include "aita/text.hpp"

namespace aita {

using nlohmann::json;

std::string_view to_string(Role role) {
    switch (role) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "user";
}

Role role_from_string(std::string_view s) {
    if (s == "system") return Role::system;
    if (s == "user") return Role::user;
    if (s == "assistant") return Role::assistant;
    throw ParseError("unknown message role '" + std::string(s) + "'");
}

void validate(const ChatRequest& request) {
    if (request.messages.empty()) throw PreconditionError("chat request has no messages");
    if (request.messages.front().role != Role::system) {
        throw PreconditionError("first chat message must have role 'system'");
    }
    for (std::size_t i = 1; i < request.messages.size(); ++i) {
        const Role expected = (i % 2 == 1) ? Role::user : Role::assistant;
        if (request.messages[i].role != expected) {
            throw PreconditionError("chat message " + std::to_string(i) + " should have role '" +
                                    std::string(to_string(expected)) + "'");
        }
    }
    if (!(request.temperature >= 0.0 && request.temperature <= 2.0)) {
        throw PreconditionError("temperature must lie in [0, 2]");
    }
    if (request.max_output_tokens <= 0) throw PreconditionError("max_output_tokens must be positive");
}

json to_wire(const ChatRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages) {
        messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    }
    return {{"model", request.model_id},
            {"messages", std::move(messages)},
            {"temperature", request.temperature},
            {"max_tokens", request.max_output_tokens}};
}

ChatRequest chat_request_from_wire(const json& body) {
    try {
        ChatRequest r;
        r.model_id = body.at("model").get<std::string>();
        r.temperature = body.at("temperature").get<double>();
        r.max_output_tokens = body.at("max_tokens").get<int>();
        for (const auto& m : body.at("messages")) {
            r.messages.push_back({role_from_string(m.at("role").get<std::string>()),
                                  m.at("content").get<std::string>()});
        }
        return r;
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed chat request body: ") + e.what());
    }
}

PriceTable PriceTable::from_json(const json& j) {
    PriceTable p;
    p.in_per_1k = j.value("price_in_per_1k", 0.0);
    p.out_per_1k = j.value("price_out_per_1k", 0.0);
    return p;
}

double count_cost(std::span<const TokenUsage> usage, const PriceTable& prices) {
    if (prices.in_per_1k < 0.0 || prices.out_per_1k < 0.0) {
        throw PreconditionError("token prices must be non-negative");
    }
    std::int64_t prompt = 0;
    std::int64_t completion = 0;
    for (const auto& u : usage) {
        if (u.prompt_tokens < 0 || u.completion_tokens < 0) {
            throw PreconditionError("token counts must be non-negative");
        }
        prompt += u.prompt_tokens;
        completion += u.completion_tokens;
    }
    const double total = static_cast<double>(prompt) / 1000.0 * prices.in_per_1k +
                         static_cast<double>(completion) / 1000.0 * prices.out_per_1k;
    return std::round(total * 1e6) / 1e6;
}

// ---------------------------------------------------------------------------
// Mocks

namespace {

std::int64_t serialized_word_count(const ChatRequest& request) {
    std::int64_t n = 0;
    for (const auto& m : request.messages) n += static_cast<std::int64_t>(text::word_count(m.content));
    return n;
}

const std::string& last_user_message(const ChatRequest& request) {
    for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
        if (it->role == Role::user) return it->content;
    }
    static const std::string empty;
    return empty;
}

ChatResponse mock_response(const ChatRequest& request, std::string content) {
    ChatResponse r;
    r.prompt_tokens = serialized_word_count(request);
    r.completion_tokens = static_cast<std::int64_t>(text::word_count(content));
    r.content = std::move(content);
    return r;
}

}  // namespace

ChatResponse EchoChatBackend::complete(const ChatRequest& request) {
    return mock_response(request, last_user_message(request));
}

ScriptedChatBackend::ScriptedChatBackend(Table table, std::string fallback)
    : table_(std::move(table)), fallback_(std::move(fallback)) {}

ChatResponse ScriptedChatBackend::complete(const ChatRequest& request) {
    const auto query = text::trim(last_user_message(request));
    for (const auto& [key, reply] : table_) {
        if (query == key) return mock_response(request, reply);
    }
    for (const auto& [key, reply] : table_) {
        if (!key.empty() && text::ifind(query, key) != std::string_view::npos) {
            return mock_response(request, reply);
        }
    }
    return mock_response(request, fallback_);
}

ChatResponse CallbackChatBackend::complete(const ChatRequest& request) {
    return mock_response(request, fn_(request));
}

MockEmbedder::MockEmbedder(std::size_t dimension) : dimension_(dimension) {
    if (dimension_ == 0) throw ConfigError("embedding dimension must be positive");
}

Embedding MockEmbedder::embed_one(std::string_view input) const {
    Embedding v(dimension_, 0.0);
    auto terms = text::tokenize(input);
    if (terms.empty()) terms.emplace_back(text::trim(input));
    for (const auto& t : terms) v[fnv1a64(t) % dimension_] += 1.0;
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

std::vector<Embedding> MockEmbedder::embed(const std::vector<std::string>& texts) {
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_one(t));
    return out;
}

// ---------------------------------------------------------------------------
// OpenAI-compatible HTTP backends

namespace {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string prefix;  // path without trailing slash
};

SplitUrl split_base_url(const std::string& base) {
    const auto scheme_end = base.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("base URL lacks a scheme: " + base);
    const auto path_start = base.find('/', scheme_end + 3);
    SplitUrl s;
    s.origin = base.substr(0, path_start);
    s.prefix = path_start == std::string::npos ? "" : base.substr(path_start);
    while (!s.prefix.empty() && s.prefix.back() == '/') s.prefix.pop_back();
    return s;
}

json post_json(const HttpEndpoint& endpoint, const std::string& route, const json& body) {
    const auto url = split_base_url(endpoint.base_url);
    httplib::Client client(url.origin);
    const auto secs = endpoint.timeout.count() / 1000;
    const auto usecs = (endpoint.timeout.count() % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    httplib::Headers headers;
    if (!endpoint.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint.api_key);

    auto res = client.Post(url.prefix + route, headers, body.dump(), "application/json");
    if (!res) {
        throw RetriableError("request to " + endpoint.base_url + route + " failed: " +
                             httplib::to_string(res.error()));
    }

    json parsed = json::parse(res->body, nullptr, false);
    if (res->status >= 200 && res->status < 300) {
        if (parsed.is_discarded()) throw RetriableError("backend returned a non-JSON body");
        return parsed;
    }

    std::string code;
    std::string message = res->body;
    if (!parsed.is_discarded() && parsed.contains("error") && parsed["error"].is_object()) {
        const auto& err = parsed["error"];
        if (err.contains("code") && err["code"].is_string()) code = err["code"].get<std::string>();
        if (err.contains("message") && err["message"].is_string()) message = err["message"].get<std::string>();
    }
    if (code == "content_filter") throw FilteredError(message);
    if (res->status == 408 || res->status == 429 || res->status >= 500) {
        throw RetriableError("backend HTTP " + std::to_string(res->status) + ": " + message);
    }
    throw ConfigError("backend HTTP " + std::to_string(res->status) + ": " + message);
}

}  // namespace

ChatResponse OpenAIChatBackend::complete(const ChatRequest& request) {
    const json reply = post_json(endpoint_, "/chat/completions", to_wire(request));
    try {
        const auto& choice = reply.at("choices").at(0);
        if (choice.value("finish_reason", "") == "content_filter") {
            throw FilteredError("completion stopped by the backend content filter");
        }
        ChatResponse r;
        const auto& content = choice.at("message").at("content");
        r.content = content.is_null() ? "" : content.get<std::string>();
        if (reply.contains("usage")) {
            r.prompt_tokens = reply["usage"].value("prompt_tokens", std::int64_t{0});
            r.completion_tokens = reply["usage"].value("completion_tokens", std::int64_t{0});
        }
        return r;
    } catch (const json::exception& e) {
        throw RetriableError(std::string("unexpected chat completion shape: ") + e.what());
    }
}

std::vector<Embedding> OpenAIEmbeddingBackend::embed(const std::vector<std::string>& texts) {
    const json body{{"model", model_id_}, {"input", texts}};
    const json reply = post_json(endpoint_, "/embeddings", body);
    std::vector<Embedding> out(texts.size());
    try {
        const auto& data = reply.at("data");
        if (data.size() != texts.size()) {
            throw RetriableError("embedding backend returned " + std::to_string(data.size()) +
                                 " vectors for " + std::to_string(texts.size()) + " inputs");
        }
        for (std::size_t i = 0; i < data.size(); ++i) {
            const auto index = data[i].value("index", i);
            if (index >= out.size()) throw RetriableError("embedding index out of range");
            out[index] = data[i].at("embedding").get<Embedding>();
        }
    } catch (const json::exception& e) {
        throw RetriableError(std::string("unexpected embeddings shape: ") + e.what());
    }
    for (const auto& v : out) {
        if (v.size() != dimension_) {
            throw ConfigError("embedding dimension " + std::to_string(v.size()) + " != configured " +
                              std::to_string(dimension_));
        }
        for (double x : v) {
            if (!std::isfinite(x)) throw RetriableError("embedding contains a non-finite value");
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway(std::shared_ptr<ChatBackend> chat, std::shared_ptr<EmbeddingBackend> embedder,
                 RetryPolicy retry)
    : chat_(std::move(chat)), embedder_(std::move(embedder)), retry_(std::move(retry)) {
    if (!chat_ || !embedder_) throw ConfigError("gateway needs both a chat and an embedding backend");
    if (!retry_.sleep) {
        retry_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    }
}

template <typename F>
auto Gateway::with_retry(F&& call) -> decltype(call()) {
    auto delay = retry_.base_delay;
    for (int attempt = 0;; ++attempt) {
        try {
            return call();
        } catch (const RetriableError&) {
            if (attempt >= retry_.max_retries) throw;
        }
        retry_.sleep(delay);
        delay *= 2;
    }
}

ChatResponse Gateway::chat(const ChatRequest& request) {
    validate(request);
    auto response = with_retry([&] { return chat_->complete(request); });
    if (response.prompt_tokens < 0 || response.completion_tokens < 0) {
        throw DataIntegrityError("backend reported negative token counts");
    }
    calls_.fetch_add(1, std::memory_order_relaxed);
    prompt_tokens_.fetch_add(response.prompt_tokens, std::memory_order_relaxed);
    completion_tokens_.fetch_add(response.completion_tokens, std::memory_order_relaxed);
    return response;
}

std::vector<Embedding> Gateway::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) throw PreconditionError("embed called with no texts");
    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (text::is_blank(texts[i])) {
            throw PreconditionError("text " + std::to_string(i) + " is empty after trimming");
        }
    }
    auto vectors = with_retry([&] { return embedder_->embed(texts); });
    if (vectors.size() != texts.size()) {
        throw DataIntegrityError("embedder returned the wrong number of vectors");
    }
    return vectors;
}

UsageTotals Gateway::usage() const {
    return {calls_.load(), prompt_tokens_.load(), completion_tokens_.load()};
}

BackendKind backend_kind_from_string(std::string_view s) {
    if (s == "live") return BackendKind::live;
    if (s == "mock-echo") return BackendKind::mock_echo;
    if (s == "mock-scripted") return BackendKind::mock_scripted;
    throw ConfigError("unknown backend '" + std::string(s) + "' (want live|mock-echo|mock-scripted)");
}

BackendConfig BackendConfig::from_json(const json& j) {
    BackendConfig c;
    c.backend = backend_kind_from_string(j.value("backend", std::string("mock-echo")));
    c.base_url = j.value("base_url", c.base_url);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.model_id = j.value("model_id", c.model_id);
    c.embedding_model_id = j.value("embedding_model_id", c.embedding_model_id);
    c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
    c.temperature = j.value("temperature", c.temperature);
    c.max_output_tokens = j.value("max_output_tokens", c.max_output_tokens);
    c.prices = PriceTable::from_json(j);
    c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
    c.max_retries = j.value("max_retries", c.max_retries);
    if (j.contains("scripted_replies")) {
        for (const auto& row : j["scripted_replies"]) {
            c.scripted_replies.emplace_back(row.at("key").get<std::string>(), row.at("reply").get<std::string>());
        }
    }
    c.scripted_fallback = j.value("scripted_fallback", c.scripted_fallback);
    if (c.embedding_dim == 0) throw ConfigError("embedding_dim must be positive");
    if (c.prices.in_per_1k < 0 || c.prices.out_per_1k < 0) throw ConfigError("prices must be non-negative");
    return c;
}

std::shared_ptr<Gateway> make_gateway(const BackendConfig& config) {
    RetryPolicy retry;
    retry.max_retries = config.max_retries;

    switch (config.backend) {
        case BackendKind::mock_echo:
            return std::make_shared<Gateway>(std::make_shared<EchoChatBackend>(),
                                             std::make_shared<MockEmbedder>(config.embedding_dim), retry);
        case BackendKind::mock_scripted:
            return std::make_shared<Gateway>(
                std::make_shared<ScriptedChatBackend>(config.scripted_replies, config.scripted_fallback),
                std::make_shared<MockEmbedder>(config.embedding_dim), retry);
        case BackendKind::live: {
            HttpEndpoint endpoint;
            endpoint.base_url = config.base_url;
            endpoint.timeout = std::chrono::milliseconds(config.timeout_ms);
            if (const char* key = std::getenv(config.api_key_env.c_str())) endpoint.api_key = key;
            return std::make_shared<Gateway>(
                std::make_shared<OpenAIChatBackend>(endpoint),
                std::make_shared<OpenAIEmbeddingBackend>(endpoint, config.embedding_model_id, config.embedding_dim),
                retry);
        }
    }
    throw ConfigError("unsupported backend kind");
}

}  // namespace aita
