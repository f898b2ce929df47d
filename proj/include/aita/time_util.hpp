#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <string_view>

namespace aita {

using TimePoint = std::chrono::sys_seconds;
using Date = std::chrono::year_month_day;
using Clock = std::function<TimePoint()>;

TimePoint now_utc();

/// "2025-03-19T09:00:00Z"
std::string format_iso8601(TimePoint t);

/// Accepts "YYYY-MM-DDTHH:MM:SSZ" and "YYYY-MM-DDTHH:MM:SS+HH:MM".
TimePoint parse_iso8601(std::string_view s);

/// "2025-03-19"
std::string format_date(Date d);
Date parse_date(std::string_view s);

/// Calendar date of `t` shifted by a fixed UTC offset.
Date local_date(TimePoint t, int offset_minutes);

std::string weekday_name(TimePoint t);

/// Parses "+60", "-330", "+05:30", "0".
int parse_utc_offset(std::string_view s);

}  // namespace aita
