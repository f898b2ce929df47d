#pragma once

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "aita/errors.hpp"
#include "aita/gateway.hpp"
#include "aita/ingest.hpp"
#include "aita/snapshot.hpp"
#include "aita/time_util.hpp"

namespace aita::testing {

inline std::filesystem::path data_dir() {
    return AITA_TEST_DATA_DIR;
}

inline TimePoint at(const char* iso) {
    return parse_iso8601(iso);
}

/// Unique scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("aita-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

struct ChunkSpec {
    std::string path;
    int unit = 1;
    std::string text;
};

/// Chunks with mock embeddings of dimension `dim`, one per spec, ordinal 0.
inline std::vector<Chunk> embedded_chunks(const std::vector<ChunkSpec>& specs, std::size_t dim = 64) {
    MockEmbedder embedder(dim);
    std::vector<Chunk> out;
    for (const auto& s : specs) {
        Chunk c;
        c.source_path = s.path;
        c.unit_number = s.unit;
        c.ordinal = 0;
        c.text = s.text;
        c.chunk_id = make_chunk_id(c.source_path, c.unit_number, c.ordinal, c.text);
        c.embedding = embedder.embed_one(c.text);
        out.push_back(std::move(c));
    }
    return out;
}

inline std::shared_ptr<const IndexSnapshot> snapshot_of(const std::vector<ChunkSpec>& specs, std::size_t dim = 64) {
    return IndexSnapshot::build(embedded_chunks(specs, dim), at("2025-01-01T00:00:00Z"));
}

/// One chunk per text, paths "doc<i>.txt", unit 1.
inline std::shared_ptr<const IndexSnapshot> snapshot_of_texts(const std::vector<std::string>& texts,
                                                              std::size_t dim = 64) {
    std::vector<ChunkSpec> specs;
    for (std::size_t i = 0; i < texts.size(); ++i) specs.push_back({"doc" + std::to_string(i) + ".txt", 1, texts[i]});
    return snapshot_of(specs, dim);
}

inline RetryPolicy no_sleep_retry(int max_retries = 2) {
    RetryPolicy p;
    p.max_retries = max_retries;
    p.sleep = [](std::chrono::milliseconds) {};
    return p;
}

inline std::shared_ptr<Gateway> mock_gateway(std::shared_ptr<ChatBackend> chat = std::make_shared<EchoChatBackend>(),
                                             std::size_t dim = 64) {
    return std::make_shared<Gateway>(std::move(chat), std::make_shared<MockEmbedder>(dim), no_sleep_retry());
}

/// Embedder that fails every call with the given error type.
template <typename Err>
class FailingEmbedder final : public EmbeddingBackend {
public:
    explicit FailingEmbedder(std::size_t dim) : dim_(dim) {}
    std::vector<Embedding> embed(const std::vector<std::string>&) override {
        ++calls;
        throw Err("embedding backend unavailable");
    }
    std::size_t dimension() const override { return dim_; }
    std::atomic<int> calls{0};

private:
    std::size_t dim_;
};

/// Chat backend whose calls block until released; used to hold a turn in flight.
class GateChatBackend final : public ChatBackend {
public:
    ChatResponse complete(const ChatRequest& request) override {
        std::unique_lock lock(mu_);
        ++waiting_;
        cv_.notify_all();
        cv_.wait(lock, [&] { return open_; });
        --waiting_;
        return EchoChatBackend().complete(request);
    }
    void wait_until_blocked() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return waiting_ > 0; });
    }
    void open() {
        std::lock_guard lock(mu_);
        open_ = true;
        cv_.notify_all();
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    int waiting_ = 0;
    bool open_ = false;
};

}  // namespace aita::testing
