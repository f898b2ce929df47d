#include "aita/store.hpp"

#include <sqlite3.h>

#include <cstring>
#include <fstream>

#include "aita/errors.hpp"

namespace aita {

namespace {

constexpr const char* kSchema = R"(
CREATE TABLE IF NOT EXISTS sessions (
    token                TEXT PRIMARY KEY,
    created_at           TEXT NOT NULL,
    consent_acknowledged INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS turns (
    session_token     TEXT NOT NULL REFERENCES sessions(token),
    turn_id           INTEGER NOT NULL,
    query             TEXT NOT NULL,
    sanitized_query   TEXT NOT NULL,
    reply             TEXT NOT NULL,
    citations         TEXT NOT NULL,
    timestamp         TEXT NOT NULL,
    prompt_tokens     INTEGER NOT NULL,
    completion_tokens INTEGER NOT NULL,
    degraded_flag     INTEGER NOT NULL,
    filtered_flag     INTEGER NOT NULL,
    violations        INTEGER NOT NULL,
    PRIMARY KEY (session_token, turn_id)
);
CREATE TABLE IF NOT EXISTS query_log (
    id                 INTEGER PRIMARY KEY AUTOINCREMENT,
    timestamp          TEXT NOT NULL,
    session_token_hash TEXT NOT NULL,
    turn_id            INTEGER NOT NULL,
    prompt_tokens      INTEGER NOT NULL,
    completion_tokens  INTEGER NOT NULL,
    degraded           INTEGER NOT NULL,
    violations         INTEGER NOT NULL,
    UNIQUE (session_token_hash, turn_id)
);
)";

struct StmtDeleter {
    void operator()(sqlite3_stmt* s) const { sqlite3_finalize(s); }
};
using Stmt = std::unique_ptr<sqlite3_stmt, StmtDeleter>;

Stmt prepare(sqlite3* db, const char* sql) {
    sqlite3_stmt* raw = nullptr;
    if (sqlite3_prepare_v2(db, sql, -1, &raw, nullptr) != SQLITE_OK) {
        throw Error(std::string("sqlite prepare failed: ") + sqlite3_errmsg(db));
    }
    return Stmt(raw);
}

void bind_text(sqlite3_stmt* s, int i, const std::string& v) {
    sqlite3_bind_text(s, i, v.c_str(), static_cast<int>(v.size()), SQLITE_TRANSIENT);
}

std::string column_text(sqlite3_stmt* s, int i) {
    const auto* p = sqlite3_column_text(s, i);
    return p == nullptr ? std::string{} : std::string(reinterpret_cast<const char*>(p));
}

void step_done(sqlite3* db, sqlite3_stmt* s) {
    const int rc = sqlite3_step(s);
    if (rc == SQLITE_CONSTRAINT) throw DataIntegrityError(std::string("constraint violated: ") + sqlite3_errmsg(db));
    if (rc != SQLITE_DONE) throw Error(std::string("sqlite step failed: ") + sqlite3_errmsg(db));
}

}  // namespace

SqliteStore::SqliteStore(const std::string& path) {
    const int flags = SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX;
    if (sqlite3_open_v2(path.c_str(), &db_, flags, nullptr) != SQLITE_OK) {
        std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
        sqlite3_close(db_);
        db_ = nullptr;
        throw Error("cannot open database " + path + ": " + msg);
    }
    sqlite3_busy_timeout(db_, 5000);
    exec("PRAGMA foreign_keys = ON;");
    exec("PRAGMA journal_mode = WAL;");
    exec(kSchema);
}

SqliteStore::~SqliteStore() {
    sqlite3_close(db_);
}

void SqliteStore::exec(const char* sql) {
    char* err = nullptr;
    if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
        std::string msg = err ? err : "unknown error";
        sqlite3_free(err);
        throw Error("sqlite: " + msg);
    }
}

void SqliteStore::create_session(const StoredSession& session) {
    std::lock_guard lock(mu_);
    auto s = prepare(db_, "INSERT INTO sessions (token, created_at, consent_acknowledged) VALUES (?, ?, ?)");
    bind_text(s.get(), 1, session.token);
    bind_text(s.get(), 2, format_iso8601(session.created_at));
    sqlite3_bind_int(s.get(), 3, session.consent_acknowledged ? 1 : 0);
    step_done(db_, s.get());
}

std::optional<StoredSession> SqliteStore::find_session(const std::string& token) {
    std::lock_guard lock(mu_);
    auto s = prepare(db_, "SELECT token, created_at, consent_acknowledged FROM sessions WHERE token = ?");
    bind_text(s.get(), 1, token);
    if (sqlite3_step(s.get()) != SQLITE_ROW) return std::nullopt;
    return StoredSession{column_text(s.get(), 0), parse_iso8601(column_text(s.get(), 1)),
                         sqlite3_column_int(s.get(), 2) != 0};
}

std::vector<ConversationTurn> SqliteStore::turns(const std::string& token) {
    std::lock_guard lock(mu_);
    auto s = prepare(db_,
                     "SELECT turn_id, query, sanitized_query, reply, citations, timestamp, prompt_tokens, "
                     "completion_tokens, degraded_flag, filtered_flag, violations "
                     "FROM turns WHERE session_token = ? ORDER BY turn_id");
    bind_text(s.get(), 1, token);
    std::vector<ConversationTurn> out;
    while (sqlite3_step(s.get()) == SQLITE_ROW) {
        ConversationTurn t;
        t.turn_id = sqlite3_column_int(s.get(), 0);
        t.query = column_text(s.get(), 1);
        t.sanitized_query = column_text(s.get(), 2);
        t.reply = column_text(s.get(), 3);
        t.citations = citations_from_json(nlohmann::json::parse(column_text(s.get(), 4)));
        t.timestamp = parse_iso8601(column_text(s.get(), 5));
        t.prompt_tokens = sqlite3_column_int64(s.get(), 6);
        t.completion_tokens = sqlite3_column_int64(s.get(), 7);
        t.degraded = sqlite3_column_int(s.get(), 8) != 0;
        t.filtered = sqlite3_column_int(s.get(), 9) != 0;
        t.violations = sqlite3_column_int(s.get(), 10);
        out.push_back(std::move(t));
    }
    return out;
}

void SqliteStore::append_turn(const std::string& token, const ConversationTurn& turn, const QueryLogRecord& record) {
    std::lock_guard lock(mu_);
    exec("BEGIN IMMEDIATE;");
    try {
        auto t = prepare(db_,
                         "INSERT INTO turns (session_token, turn_id, query, sanitized_query, reply, citations, "
                         "timestamp, prompt_tokens, completion_tokens, degraded_flag, filtered_flag, violations) "
                         "VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)");
        bind_text(t.get(), 1, token);
        sqlite3_bind_int(t.get(), 2, turn.turn_id);
        bind_text(t.get(), 3, turn.query);
        bind_text(t.get(), 4, turn.sanitized_query);
        bind_text(t.get(), 5, turn.reply);
        bind_text(t.get(), 6, citations_to_json(turn.citations).dump());
        bind_text(t.get(), 7, format_iso8601(turn.timestamp));
        sqlite3_bind_int64(t.get(), 8, turn.prompt_tokens);
        sqlite3_bind_int64(t.get(), 9, turn.completion_tokens);
        sqlite3_bind_int(t.get(), 10, turn.degraded ? 1 : 0);
        sqlite3_bind_int(t.get(), 11, turn.filtered ? 1 : 0);
        sqlite3_bind_int(t.get(), 12, turn.violations);
        step_done(db_, t.get());

        if (fail_next_append_) {
            fail_next_append_ = false;
            throw Error("injected persistence failure");
        }

        auto q = prepare(db_,
                         "INSERT INTO query_log (timestamp, session_token_hash, turn_id, prompt_tokens, "
                         "completion_tokens, degraded, violations) VALUES (?, ?, ?, ?, ?, ?, ?)");
        bind_text(q.get(), 1, format_iso8601(record.timestamp));
        bind_text(q.get(), 2, record.session_token_hash);
        sqlite3_bind_int(q.get(), 3, turn.turn_id);
        sqlite3_bind_int64(q.get(), 4, record.prompt_tokens);
        sqlite3_bind_int64(q.get(), 5, record.completion_tokens);
        sqlite3_bind_int(q.get(), 6, record.degraded ? 1 : 0);
        sqlite3_bind_int(q.get(), 7, record.violations);
        step_done(db_, q.get());
        exec("COMMIT;");
    } catch (...) {
        sqlite3_exec(db_, "ROLLBACK;", nullptr, nullptr, nullptr);
        throw;
    }
}

std::vector<QueryLogRecord> SqliteStore::query_log() {
    std::lock_guard lock(mu_);
    auto s = prepare(db_,
                     "SELECT timestamp, session_token_hash, prompt_tokens, completion_tokens, degraded, violations "
                     "FROM query_log ORDER BY id");
    std::vector<QueryLogRecord> out;
    while (sqlite3_step(s.get()) == SQLITE_ROW) {
        QueryLogRecord r;
        r.timestamp = parse_iso8601(column_text(s.get(), 0));
        r.session_token_hash = column_text(s.get(), 1);
        r.prompt_tokens = sqlite3_column_int64(s.get(), 2);
        r.completion_tokens = sqlite3_column_int64(s.get(), 3);
        r.degraded = sqlite3_column_int(s.get(), 4) != 0;
        r.violations = sqlite3_column_int(s.get(), 5);
        out.push_back(std::move(r));
    }
    return out;
}

std::size_t SqliteStore::session_count() {
    std::lock_guard lock(mu_);
    auto s = prepare(db_, "SELECT COUNT(*) FROM sessions");
    sqlite3_step(s.get());
    return static_cast<std::size_t>(sqlite3_column_int64(s.get(), 0));
}

std::vector<std::pair<std::string, std::string>> SqliteStore::schema_columns() {
    std::lock_guard lock(mu_);
    std::vector<std::pair<std::string, std::string>> out;
    auto tables = prepare(db_, "SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%'");
    std::vector<std::string> names;
    while (sqlite3_step(tables.get()) == SQLITE_ROW) names.push_back(column_text(tables.get(), 0));
    for (const auto& table : names) {
        auto cols = prepare(db_, ("PRAGMA table_info(" + table + ")").c_str());
        while (sqlite3_step(cols.get()) == SQLITE_ROW) out.emplace_back(table, column_text(cols.get(), 1));
    }
    return out;
}

int SqliteStore::log_rows_for_turn(const std::string& token, int turn_id) {
    std::lock_guard lock(mu_);
    auto s = prepare(db_, "SELECT COUNT(*) FROM query_log WHERE session_token_hash = ? AND turn_id = ?");
    bind_text(s.get(), 1, hash_session_token(token));
    sqlite3_bind_int(s.get(), 2, turn_id);
    sqlite3_step(s.get());
    return sqlite3_column_int(s.get(), 0);
}

bool looks_like_sqlite(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    char header[16] = {};
    in.read(header, sizeof header);
    return in.gcount() == 16 && std::memcmp(header, "SQLite format 3\0", 16) == 0;
}

}  // namespace aita
