#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "aita/gateway.hpp"
#include "aita/time_util.hpp"

namespace aita {

/// Privacy-reduced record of one answered query. Holds no query text and no raw
/// session token.
struct QueryLogRecord {
    TimePoint timestamp{};
    std::string session_token_hash;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    bool degraded = false;
    int violations = 0;

    bool operator==(const QueryLogRecord&) const = default;
};

/// One-way, domain-separated sha256 of a session token.
std::string hash_session_token(std::string_view token);

nlohmann::json to_json(const QueryLogRecord& r);
QueryLogRecord query_log_record_from_json(const nlohmann::json& j);

std::string to_json_line(const QueryLogRecord& r);

/// JSON-lines; blank lines ignored. ParseError names the offending line.
std::vector<QueryLogRecord> read_query_log(std::istream& in);
std::vector<QueryLogRecord> read_query_log_file(const std::filesystem::path& path);

struct DailyCount {
    Date date;
    std::int64_t count = 0;

    bool operator==(const DailyCount&) const = default;
};

/// Counts per local calendar date, every date from the first to the last
/// observed one included (zero-filled).
std::vector<DailyCount> daily_counts(std::span<const QueryLogRecord> log, int timezone_offset_minutes = 0);

struct UsageSummary {
    std::int64_t total_queries = 0;
    std::int64_t total_sessions = 0;
    double queries_per_session = 0.0;
    double queries_per_student = 0.0;
    std::int64_t span_days = 0;
};

/// Throws PreconditionError for cohort_size <= 0 and DataIntegrityError when
/// queries exist but no session hash does.
UsageSummary usage_summary(std::span<const QueryLogRecord> log, std::int64_t cohort_size,
                           int timezone_offset_minutes = 0);

struct PeakShare {
    std::int64_t day_queries = 0;
    std::int64_t total_queries = 0;
    double share = 0.0;
};

/// Throws UndefinedValueError when the log is empty.
PeakShare peak_share(std::span<const QueryLogRecord> log, Date date, int timezone_offset_minutes = 0);

/// The date with most queries (earliest on ties). Empty log → nullopt.
std::optional<Date> busiest_date(std::span<const QueryLogRecord> log, int timezone_offset_minutes = 0);

struct WindowShare {
    std::int64_t window_queries = 0;
    std::int64_t day_queries = 0;
    double share = 0.0;
};

/// Share of one local day's queries that fall in [from, to) local time, given as
/// seconds since local midnight. Throws UndefinedValueError for an empty day.
WindowShare window_share(std::span<const QueryLogRecord> log, Date date, std::chrono::seconds from,
                         std::chrono::seconds to, int timezone_offset_minutes = 0);

struct CostReport {
    std::int64_t queries = 0;
    double fixed_cost = 0.0;
    double token_cost = 0.0;
    double total_cost = 0.0;
    double per_query_cost = 0.0;
    double token_per_query_cost = 0.0;
};

/// Token cost via count_cost. Throws PreconditionError for an empty log.
CostReport cost_report(std::span<const QueryLogRecord> log, double fixed_cost, const PriceTable& prices);

/// Display helpers: one decimal, and whole percent.
std::string format_one_decimal(double x);
std::string format_percent(double share, int decimals = 0);

}  // namespace aita
