#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "aita/orchestrator.hpp"
#include "aita/telemetry.hpp"
#include "aita/time_util.hpp"

struct sqlite3;

namespace aita {

struct StoredSession {
    std::string token;
    TimePoint created_at{};
    bool consent_acknowledged = false;
};

/// Relational persistence for anonymous sessions, their turns and the
/// telemetry log. Implementations must be safe for concurrent use.
class ConversationStore {
public:
    virtual ~ConversationStore() = default;

    virtual void create_session(const StoredSession& session) = 0;
    virtual std::optional<StoredSession> find_session(const std::string& token) = 0;
    virtual std::vector<ConversationTurn> turns(const std::string& token) = 0;

    /// Writes the turn and its log record atomically. Throws DataIntegrityError
    /// if (token, turn_id) already exists.
    virtual void append_turn(const std::string& token, const ConversationTurn& turn, const QueryLogRecord& record) = 0;

    virtual std::vector<QueryLogRecord> query_log() = 0;
    virtual std::size_t session_count() = 0;
};

/// Embedded file-backed store. ":memory:" gives a private in-memory database.
class SqliteStore final : public ConversationStore {
public:
    explicit SqliteStore(const std::string& path);
    ~SqliteStore() override;

    SqliteStore(const SqliteStore&) = delete;
    SqliteStore& operator=(const SqliteStore&) = delete;

    void create_session(const StoredSession& session) override;
    std::optional<StoredSession> find_session(const std::string& token) override;
    std::vector<ConversationTurn> turns(const std::string& token) override;
    void append_turn(const std::string& token, const ConversationTurn& turn, const QueryLogRecord& record) override;
    std::vector<QueryLogRecord> query_log() override;
    std::size_t session_count() override;

    /// (table, column) for every column in the schema.
    std::vector<std::pair<std::string, std::string>> schema_columns();

    /// Number of query_log rows recorded for a turn.
    int log_rows_for_turn(const std::string& token, int turn_id);

    /// Test hook: make the next append_turn fail inside its transaction.
    void fail_next_append() { fail_next_append_ = true; }

private:
    void exec(const char* sql);

    std::mutex mu_;
    sqlite3* db_ = nullptr;
    bool fail_next_append_ = false;
};

/// True if the file starts with the SQLite header.
bool looks_like_sqlite(const std::string& path);

}  // namespace aita
