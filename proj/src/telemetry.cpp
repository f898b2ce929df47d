#include "aita/telemetry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "aita/errors.hpp"
#include "aita/hashing.hpp"

namespace aita {

using nlohmann::json;

std::string hash_session_token(std::string_view token) {
    std::string input = "aita-session-v1:";
    input.append(token);
    return sha256_hex(input);
}

json to_json(const QueryLogRecord& r) {
    return {{"timestamp", format_iso8601(r.timestamp)},
            {"session", r.session_token_hash},
            {"prompt_tokens", r.prompt_tokens},
            {"completion_tokens", r.completion_tokens},
            {"degraded", r.degraded},
            {"violations", r.violations}};
}

QueryLogRecord query_log_record_from_json(const json& j) {
    try {
        QueryLogRecord r;
        r.timestamp = parse_iso8601(j.at("timestamp").get<std::string>());
        r.session_token_hash = j.at("session").get<std::string>();
        r.prompt_tokens = j.value("prompt_tokens", std::int64_t{0});
        r.completion_tokens = j.value("completion_tokens", std::int64_t{0});
        r.degraded = j.value("degraded", false);
        r.violations = j.value("violations", 0);
        if (r.prompt_tokens < 0 || r.completion_tokens < 0 || r.violations < 0) {
            throw ParseError("negative count in query log record");
        }
        return r;
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed query log record: ") + e.what());
    }
}

std::string to_json_line(const QueryLogRecord& r) {
    return to_json(r).dump();
}

std::vector<QueryLogRecord> read_query_log(std::istream& in) {
    std::vector<QueryLogRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw ParseError("query log line " + std::to_string(line_no) + " is not JSON");
        try {
            out.push_back(query_log_record_from_json(j));
        } catch (const ParseError& e) {
            throw ParseError("query log line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::vector<QueryLogRecord> read_query_log_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open query log " + path.string());
    return read_query_log(in);
}

std::vector<DailyCount> daily_counts(std::span<const QueryLogRecord> log, int timezone_offset_minutes) {
    if (log.empty()) return {};
    std::map<std::chrono::sys_days, std::int64_t> by_day;
    for (const auto& r : log) ++by_day[std::chrono::sys_days{local_date(r.timestamp, timezone_offset_minutes)}];
    std::vector<DailyCount> out;
    const auto first = by_day.begin()->first;
    const auto last = by_day.rbegin()->first;
    for (auto d = first; d <= last; d += std::chrono::days{1}) {
        const auto it = by_day.find(d);
        out.push_back({Date{d}, it == by_day.end() ? 0 : it->second});
    }
    return out;
}

UsageSummary usage_summary(std::span<const QueryLogRecord> log, std::int64_t cohort_size,
                           int timezone_offset_minutes) {
    if (cohort_size <= 0) throw PreconditionError("cohort size must be positive");
    UsageSummary s;
    s.total_queries = static_cast<std::int64_t>(log.size());
    std::set<std::string_view> sessions;
    for (const auto& r : log) {
        if (!r.session_token_hash.empty()) sessions.insert(r.session_token_hash);
    }
    s.total_sessions = static_cast<std::int64_t>(sessions.size());
    if (s.total_queries > 0 && s.total_sessions == 0) {
        throw DataIntegrityError("log has queries but no session identifiers");
    }
    if (s.total_sessions > 0) {
        s.queries_per_session = static_cast<double>(s.total_queries) / static_cast<double>(s.total_sessions);
    }
    s.queries_per_student = static_cast<double>(s.total_queries) / static_cast<double>(cohort_size);
    s.span_days = static_cast<std::int64_t>(daily_counts(log, timezone_offset_minutes).size());
    return s;
}

PeakShare peak_share(std::span<const QueryLogRecord> log, Date date, int timezone_offset_minutes) {
    PeakShare p;
    p.total_queries = static_cast<std::int64_t>(log.size());
    if (p.total_queries == 0) throw UndefinedValueError("share undefined: the log is empty");
    for (const auto& r : log) {
        if (local_date(r.timestamp, timezone_offset_minutes) == date) ++p.day_queries;
    }
    p.share = static_cast<double>(p.day_queries) / static_cast<double>(p.total_queries);
    return p;
}

std::optional<Date> busiest_date(std::span<const QueryLogRecord> log, int timezone_offset_minutes) {
    std::optional<DailyCount> best;
    for (const auto& d : daily_counts(log, timezone_offset_minutes)) {
        if (!best || d.count > best->count) best = d;
    }
    if (!best) return std::nullopt;
    return best->date;
}

WindowShare window_share(std::span<const QueryLogRecord> log, Date date, std::chrono::seconds from,
                         std::chrono::seconds to, int timezone_offset_minutes) {
    using namespace std::chrono;
    WindowShare w;
    const auto midnight = sys_days{date};
    for (const auto& r : log) {
        const auto local = r.timestamp + minutes{timezone_offset_minutes};
        if (floor<days>(local) != midnight) continue;
        ++w.day_queries;
        const auto since_midnight = local - midnight;
        if (since_midnight >= from && since_midnight < to) ++w.window_queries;
    }
    if (w.day_queries == 0) throw UndefinedValueError("share undefined: no queries on " + format_date(date));
    w.share = static_cast<double>(w.window_queries) / static_cast<double>(w.day_queries);
    return w;
}

CostReport cost_report(std::span<const QueryLogRecord> log, double fixed_cost, const PriceTable& prices) {
    if (log.empty()) throw PreconditionError("cost per query undefined: the log is empty");
    if (fixed_cost < 0.0) throw PreconditionError("fixed cost must be non-negative");
    std::vector<TokenUsage> usage;
    usage.reserve(log.size());
    for (const auto& r : log) usage.push_back({r.prompt_tokens, r.completion_tokens});

    CostReport c;
    c.queries = static_cast<std::int64_t>(log.size());
    c.fixed_cost = fixed_cost;
    c.token_cost = count_cost(usage, prices);
    c.total_cost = fixed_cost + c.token_cost;
    c.per_query_cost = c.total_cost / static_cast<double>(c.queries);
    c.token_per_query_cost = c.token_cost / static_cast<double>(c.queries);
    return c;
}

std::string format_one_decimal(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f", x);
    return buf;
}

std::string format_percent(double share, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f%%", decimals, share * 100.0);
    return buf;
}

}  // namespace aita
