#include <gtest/gtest.h>

#include <regex>
#include <set>

#include "aita/errors.hpp"
#include "aita/hashing.hpp"
#include "aita/time_util.hpp"

using namespace aita;
using namespace std::chrono;

TEST(Hashing, Sha256KnownVector) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Hashing, Fnv1aKnownVectors) {
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Hashing, TokensAreUrlSafeAndDistinct) {
    const std::regex urlsafe("^[A-Za-z0-9_-]{22}$");
    std::set<std::string> seen;
    for (int i = 0; i < 200; ++i) {
        const auto t = random_urlsafe_token(16);
        EXPECT_TRUE(std::regex_match(t, urlsafe)) << t;
        seen.insert(t);
    }
    EXPECT_EQ(seen.size(), 200u);
}

TEST(Time, Iso8601RoundTrip) {
    const auto t = parse_iso8601("2025-03-19T09:00:00Z");
    EXPECT_EQ(format_iso8601(t), "2025-03-19T09:00:00Z");
    EXPECT_EQ(parse_iso8601("2025-03-19T10:30:00+01:30"), t);
    EXPECT_EQ(parse_iso8601("2025-03-19T09:00:00.250Z"), t);
    EXPECT_THROW(parse_iso8601("2025-03-19 09:00"), ParseError);
    EXPECT_THROW(parse_iso8601("2025-02-30T00:00:00Z"), ParseError);
}

TEST(Time, LocalDateShiftsAcrossMidnight) {
    const auto t = parse_iso8601("2025-03-19T23:30:00Z");
    EXPECT_EQ(format_date(local_date(t, 0)), "2025-03-19");
    EXPECT_EQ(format_date(local_date(t, 120)), "2025-03-20");
    EXPECT_EQ(format_date(local_date(parse_iso8601("2025-03-20T00:30:00Z"), -60)), "2025-03-19");
}

TEST(Time, Weekday) {
    EXPECT_EQ(weekday_name(parse_iso8601("2025-03-19T09:00:00Z")), "Wednesday");
}

TEST(Time, UtcOffsets) {
    EXPECT_EQ(parse_utc_offset("+60"), 60);
    EXPECT_EQ(parse_utc_offset("-330"), -330);
    EXPECT_EQ(parse_utc_offset("+05:30"), 330);
    EXPECT_EQ(parse_utc_offset("0"), 0);
    EXPECT_THROW(parse_utc_offset("abc"), ParseError);
}

TEST(Time, DateRoundTrip) {
    EXPECT_EQ(format_date(parse_date("2025-03-19")), "2025-03-19");
    EXPECT_THROW(parse_date("2025-13-01"), ParseError);
}
