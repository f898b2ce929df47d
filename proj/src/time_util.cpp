#include "aita/time_util.hpp"

#include <array>
#include <charconv>
#include <cstdio>

#include "aita/errors.hpp"

namespace aita {

namespace {

int parse_int(std::string_view s, std::string_view what) {
    int v = 0;
    const auto* end = s.data() + s.size();
    auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || p != end) {
        throw ParseError("invalid " + std::string(what) + ": '" + std::string(s) + "'");
    }
    return v;
}

Date checked_date(int y, int m, int d, std::string_view src) {
    Date date{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
              std::chrono::day{static_cast<unsigned>(d)}};
    if (!date.ok()) throw ParseError("invalid calendar date: '" + std::string(src) + "'");
    return date;
}

}  // namespace

TimePoint now_utc() {
    return std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
}

std::string format_iso8601(TimePoint t) {
    using namespace std::chrono;
    const auto day = floor<days>(t);
    const year_month_day ymd{day};
    const hh_mm_ss hms{t - day};
    std::array<char, 64> buf{};
    std::snprintf(buf.data(), buf.size(), "%04d-%02u-%02uT%02ld:%02ld:%02ldZ",
                  static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()), static_cast<long>(hms.hours().count()),
                  static_cast<long>(hms.minutes().count()), static_cast<long>(hms.seconds().count()));
    return buf.data();
}

TimePoint parse_iso8601(std::string_view s) {
    using namespace std::chrono;
    if (s.size() < 20 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') ||
        s[13] != ':' || s[16] != ':') {
        throw ParseError("invalid ISO-8601 timestamp: '" + std::string(s) + "'");
    }
    const auto date = checked_date(parse_int(s.substr(0, 4), "year"), parse_int(s.substr(5, 2), "month"),
                                   parse_int(s.substr(8, 2), "day"), s);
    const int hh = parse_int(s.substr(11, 2), "hour");
    const int mm = parse_int(s.substr(14, 2), "minute");
    const int ss = parse_int(s.substr(17, 2), "second");
    if (hh > 23 || mm > 59 || ss > 60) throw ParseError("invalid time of day: '" + std::string(s) + "'");

    std::size_t pos = 19;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
    }
    const auto zone = s.substr(pos);
    int offset_minutes = 0;
    if (zone == "Z" || zone == "z") {
        offset_minutes = 0;
    } else if (!zone.empty() && (zone[0] == '+' || zone[0] == '-')) {
        offset_minutes = parse_utc_offset(zone);
    } else {
        throw ParseError("missing UTC designator in timestamp: '" + std::string(s) + "'");
    }
    return sys_days{date} + hours{hh} + minutes{mm} + seconds{ss} - minutes{offset_minutes};
}

std::string format_date(Date d) {
    std::array<char, 16> buf{};
    std::snprintf(buf.data(), buf.size(), "%04d-%02u-%02u", static_cast<int>(d.year()),
                  static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
    return buf.data();
}

Date parse_date(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') {
        throw ParseError("invalid date (want YYYY-MM-DD): '" + std::string(s) + "'");
    }
    return checked_date(parse_int(s.substr(0, 4), "year"), parse_int(s.substr(5, 2), "month"),
                        parse_int(s.substr(8, 2), "day"), s);
}

Date local_date(TimePoint t, int offset_minutes) {
    using namespace std::chrono;
    return year_month_day{floor<days>(t + minutes{offset_minutes})};
}

std::string weekday_name(TimePoint t) {
    static constexpr std::array<const char*, 7> names{"Sunday",   "Monday", "Tuesday", "Wednesday",
                                                      "Thursday", "Friday", "Saturday"};
    const std::chrono::weekday wd{std::chrono::floor<std::chrono::days>(t)};
    return names[wd.c_encoding()];
}

int parse_utc_offset(std::string_view s) {
    if (s.empty()) throw ParseError("empty UTC offset");
    int sign = 1;
    std::string_view body = s;
    if (body[0] == '+' || body[0] == '-') {
        sign = body[0] == '-' ? -1 : 1;
        body.remove_prefix(1);
    }
    if (const auto colon = body.find(':'); colon != std::string_view::npos) {
        const int h = parse_int(body.substr(0, colon), "offset hours");
        const int m = parse_int(body.substr(colon + 1), "offset minutes");
        if (m > 59) throw ParseError("invalid UTC offset: '" + std::string(s) + "'");
        return sign * (h * 60 + m);
    }
    return sign * parse_int(body, "offset minutes");
}

}  // namespace aita
