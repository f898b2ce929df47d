// The OpenAI-compatible backends against an in-process HTTP server.

#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "aita/errors.hpp"
#include "aita/gateway.hpp"
#include "fixtures.hpp"

using namespace aita;
using nlohmann::json;

namespace {

class FakeOpenAI : public ::testing::Test {
protected:
    void SetUp() override {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            ++chat_calls;
            last_auth = req.get_header_value("Authorization");
            last_body = json::parse(req.body);
            if (chat_failures > 0) {
                --chat_failures;
                res.status = failure_status;
                res.set_content(R"({"error": {"message": "busy", "code": "rate_limit"}})", "application/json");
                return;
            }
            res.set_content(chat_reply.dump(), "application/json");
            res.status = chat_status;
        });
        server_.Post("/v1/embeddings", [this](const httplib::Request& req, httplib::Response& res) {
            const auto body = json::parse(req.body);
            last_body = body;
            json data = json::array();
            const auto& input = body.at("input");
            // Reversed order with explicit indices, as some servers do.
            for (std::size_t i = input.size(); i-- > 0;) {
                json v = json::array();
                for (std::size_t d = 0; d < embed_dim; ++d) v.push_back(static_cast<double>(i + d));
                data.push_back({{"index", i}, {"embedding", v}});
            }
            res.set_content(json{{"data", data}}.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    void TearDown() override {
        server_.stop();
        thread_.join();
    }

    HttpEndpoint endpoint() const {
        return {"http://127.0.0.1:" + std::to_string(port_) + "/v1", "sk-test", std::chrono::milliseconds(5000)};
    }

    static ChatRequest request() {
        ChatRequest r;
        r.model_id = "gpt-4o-mini";
        r.messages = {{Role::system, "sys"}, {Role::user, "What is a garbage matte?"}};
        return r;
    }

    json chat_reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", "A rough roto shape."}}},
                                     {"finish_reason", "stop"}}}},
                       {"usage", {{"prompt_tokens", 42}, {"completion_tokens", 7}}}};
    int chat_status = 200;
    std::atomic<int> chat_failures{0};
    int failure_status = 429;
    std::atomic<int> chat_calls{0};
    std::string last_auth;
    json last_body;
    std::size_t embed_dim = 3;

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
};

}  // namespace

TEST_F(FakeOpenAI, ChatSendsWireBodyAndParsesUsage) {
    Gateway gw(std::make_shared<OpenAIChatBackend>(endpoint()), std::make_shared<MockEmbedder>(4),
               aita::testing::no_sleep_retry());
    const auto r = gw.chat(request());
    EXPECT_EQ(r.content, "A rough roto shape.");
    EXPECT_EQ(r.prompt_tokens, 42);
    EXPECT_EQ(r.completion_tokens, 7);
    EXPECT_EQ(last_auth, "Bearer sk-test");
    EXPECT_EQ(last_body, to_wire(request()));
}

TEST_F(FakeOpenAI, RetriesRateLimitThenSucceeds) {
    chat_failures = 2;
    Gateway gw(std::make_shared<OpenAIChatBackend>(endpoint()), std::make_shared<MockEmbedder>(4),
               aita::testing::no_sleep_retry());
    EXPECT_EQ(gw.chat(request()).content, "A rough roto shape.");
    EXPECT_EQ(chat_calls.load(), 3);
}

TEST_F(FakeOpenAI, ServerErrorsExhaustRetries) {
    chat_failures = 10;
    failure_status = 503;
    Gateway gw(std::make_shared<OpenAIChatBackend>(endpoint()), std::make_shared<MockEmbedder>(4),
               aita::testing::no_sleep_retry());
    EXPECT_THROW(gw.chat(request()), RetriableError);
    EXPECT_EQ(chat_calls.load(), 3);
}

TEST_F(FakeOpenAI, ClientErrorIsConfigErrorWithoutRetry) {
    chat_reply = {{"error", {{"message", "invalid api key"}, {"code", "invalid_api_key"}}}};
    chat_status = 401;
    Gateway gw(std::make_shared<OpenAIChatBackend>(endpoint()), std::make_shared<MockEmbedder>(4),
               aita::testing::no_sleep_retry());
    EXPECT_THROW(gw.chat(request()), ConfigError);
    EXPECT_EQ(chat_calls.load(), 1);
}

TEST_F(FakeOpenAI, ContentFilterIsDistinct) {
    chat_reply = {{"error", {{"message", "The response was filtered: violence"}, {"code", "content_filter"}}}};
    chat_status = 400;
    OpenAIChatBackend backend(endpoint());
    try {
        backend.complete(request());
        FAIL() << "expected FilteredError";
    } catch (const FilteredError& e) {
        EXPECT_NE(std::string(e.what()).find("violence"), std::string::npos);
    }
}

TEST_F(FakeOpenAI, FinishReasonContentFilter) {
    chat_reply["choices"][0]["finish_reason"] = "content_filter";
    OpenAIChatBackend backend(endpoint());
    EXPECT_THROW(backend.complete(request()), FilteredError);
}

TEST_F(FakeOpenAI, UnreachableIsRetriable) {
    HttpEndpoint dead{"http://127.0.0.1:1/v1", "", std::chrono::milliseconds(300)};
    OpenAIChatBackend backend(dead);
    EXPECT_THROW(backend.complete(request()), RetriableError);
}

TEST_F(FakeOpenAI, EmbeddingsRestoreIndexOrder) {
    OpenAIEmbeddingBackend backend(endpoint(), "text-embedding-ada-002", 3);
    const auto v = backend.embed({"a", "b", "c"});
    ASSERT_EQ(v.size(), 3u);
    EXPECT_EQ(v[0], (Embedding{0, 1, 2}));
    EXPECT_EQ(v[2], (Embedding{2, 3, 4}));
    EXPECT_EQ(last_body["model"], "text-embedding-ada-002");
}

TEST_F(FakeOpenAI, EmbeddingDimensionMismatchIsConfigError) {
    OpenAIEmbeddingBackend backend(endpoint(), "m", 5);
    EXPECT_THROW(backend.embed({"a"}), ConfigError);
}

TEST_F(FakeOpenAI, MakeGatewayLiveReadsKeyFromEnvironment) {
    ::setenv("AITA_TEST_LIVE_KEY", "sk-from-env", 1);
    BackendConfig c;
    c.backend = BackendKind::live;
    c.base_url = endpoint().base_url;
    c.api_key_env = "AITA_TEST_LIVE_KEY";
    c.embedding_dim = 3;
    auto gw = make_gateway(c);
    gw->chat(request());
    EXPECT_EQ(last_auth, "Bearer sk-from-env");
    EXPECT_EQ(gw->embed({"x"}).front().size(), 3u);
}
