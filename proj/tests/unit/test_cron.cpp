#include <gtest/gtest.h>

#include <random>

#include "bloompipe/cron.hpp"
#include "bloompipe/error.hpp"

using namespace bloompipe;
using namespace std::chrono;

namespace {

Errc parse_code(const std::string& text) {
    try {
        CronExpr::parse(text);
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "parsed: " << text;
    return Errc::Http;
}

/// Minute-by-minute walk with its own calendar arithmetic and day rule.
Timestamp walk_next(const CronExpr& c, Timestamp after, int limit_minutes) {
    auto t = floor<minutes>(after) + minutes{1};
    for (int i = 0; i < limit_minutes; ++i, t += minutes{1}) {
        const auto day = floor<days>(t);
        const year_month_day ymd{day};
        const hh_mm_ss hms{t - day};
        const int dow = static_cast<int>(weekday{day}.c_encoding());
        const bool dom_full = c.days_of_month().count() == 31;
        const bool dow_full = c.days_of_week().count() == 7;
        const bool dom_ok = c.days_of_month()[static_cast<unsigned>(ymd.day())];
        const bool dow_ok = c.days_of_week()[dow];
        bool day_ok;
        if (!dom_full && !dow_full) day_ok = dom_ok || dow_ok;
        else day_ok = dom_ok && dow_ok;
        if (c.minutes()[hms.minutes().count()] && c.hours()[hms.hours().count()] &&
            c.months()[static_cast<unsigned>(ymd.month())] && day_ok) {
            return time_point_cast<Millis>(t);
        }
    }
    return Timestamp{};
}

}  // namespace

TEST(CronParse, EveryThreeMinutes) {
    const auto c = CronExpr::parse("*/3 * * * *");
    for (int m = 0; m < 60; ++m) EXPECT_EQ(c.minutes()[m], m % 3 == 0) << m;
    EXPECT_EQ(c.minutes().count(), 20u);
    EXPECT_EQ(c.hours().count(), 24u);
    EXPECT_EQ(c.days_of_month().count(), 31u);
    EXPECT_EQ(c.months().count(), 12u);
    EXPECT_EQ(c.days_of_week().count(), 7u);
}

TEST(CronParse, ListsRangesAndSteps) {
    const auto c = CronExpr::parse("1,5-7,50-59/5 8-17/3 1 1-12/6 1-5");
    std::bitset<60> m;
    for (int v : {1, 5, 6, 7, 50, 55}) m.set(v);
    EXPECT_EQ(c.minutes(), m);
    std::bitset<24> h;
    for (int v : {8, 11, 14, 17}) h.set(v);
    EXPECT_EQ(c.hours(), h);
    EXPECT_TRUE(c.months()[1]);
    EXPECT_TRUE(c.months()[7]);
    EXPECT_EQ(c.months().count(), 2u);
    EXPECT_EQ(c.days_of_week(), std::bitset<7>("0111110"));
    const auto d = CronExpr::parse("10/20 * * * *");
    EXPECT_EQ(d.minutes().count(), 3u);
    EXPECT_TRUE(d.minutes()[10] && d.minutes()[30] && d.minutes()[50]);
}

TEST(CronParse, Errors) {
    EXPECT_EQ(parse_code("61 * * * *"), Errc::CronRange);
    EXPECT_EQ(parse_code("* 24 * * *"), Errc::CronRange);
    EXPECT_EQ(parse_code("* * 0 * *"), Errc::CronRange);
    EXPECT_EQ(parse_code("* * * 13 *"), Errc::CronRange);
    EXPECT_EQ(parse_code("* * * * 7"), Errc::CronRange);
    EXPECT_EQ(parse_code("5-1 * * * *"), Errc::CronRange);
    EXPECT_EQ(parse_code("*/0 * * * *"), Errc::CronRange);
    EXPECT_EQ(parse_code("* * * *"), Errc::CronSyntax);
    EXPECT_EQ(parse_code("* * * * * *"), Errc::CronSyntax);
    EXPECT_EQ(parse_code("a * * * *"), Errc::CronSyntax);
    EXPECT_EQ(parse_code("1,,2 * * * *"), Errc::CronSyntax);
    EXPECT_EQ(parse_code(""), Errc::CronSyntax);
    try {
        CronExpr::parse("*/3 * 40 * *");
        FAIL();
    } catch (const CronParseError& e) {
        EXPECT_EQ(e.position(), 6u);
    }
}

TEST(CronNext, WorkedExamples) {
    const auto every3 = CronExpr::parse("*/3 * * * *");
    EXPECT_EQ(every3.next_fire(make_utc(2021, 7, 14, 12, 0, 0)), make_utc(2021, 7, 14, 12, 3, 0));
    EXPECT_EQ(every3.next_fire(make_utc(2021, 7, 14, 12, 1, 59)), make_utc(2021, 7, 14, 12, 3, 0));
    EXPECT_EQ(every3.next_fire(make_utc(2021, 7, 14, 23, 58, 0)), make_utc(2021, 7, 15, 0, 0, 0));

    // 2021-07-12 is a Monday.
    const auto monday9 = CronExpr::parse("0 9 * * 1");
    EXPECT_EQ(monday9.next_fire(make_utc(2021, 7, 12, 9, 0, 0)), make_utc(2021, 7, 19, 9, 0, 0));

    const auto new_year = CronExpr::parse("0 0 1 1 *");
    EXPECT_EQ(new_year.next_fire(make_utc(2021, 7, 14, 0, 0, 0)), make_utc(2022, 1, 1, 0, 0, 0));
    EXPECT_TRUE(new_year.matches(make_utc(2030, 1, 1, 0, 0, 0)));
    EXPECT_FALSE(new_year.matches(make_utc(2030, 1, 2, 0, 0, 0)));

    const auto leap = CronExpr::parse("0 12 29 2 *");
    EXPECT_EQ(leap.next_fire(make_utc(2021, 3, 1, 0, 0, 0)), make_utc(2024, 2, 29, 12, 0, 0));
}

TEST(CronNext, ImpossibleDateHasNoFire) {
    try {
        CronExpr::parse("0 0 30 2 *").next_fire(make_utc(2021, 1, 1, 0, 0, 0));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::NoFireWithinHorizon);
    }
}

TEST(CronNext, DayFieldsCombineWithOrWhenBothRestricted) {
    // 13th of the month or any Friday.
    const auto c = CronExpr::parse("0 0 13 * 5");
    EXPECT_EQ(c.next_fire(make_utc(2021, 7, 1, 0, 0, 0)), make_utc(2021, 7, 2, 0, 0, 0));  // Friday
    EXPECT_EQ(c.next_fire(make_utc(2021, 7, 12, 0, 0, 0)), make_utc(2021, 7, 13, 0, 0, 0));
}

TEST(CronNext, AgreesWithMinuteWalkOnRandomExpressions) {
    std::mt19937 rng(99);
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    auto field = [&](int lo, int hi) -> std::string {
        switch (pick(0, 4)) {
            case 0: return "*";
            case 1: return std::to_string(pick(lo, hi));
            case 2: {
                const int a = pick(lo, hi);
                return std::to_string(a) + "-" + std::to_string(pick(a, hi));
            }
            case 3: return "*/" + std::to_string(pick(1, std::max(1, (hi - lo) / 2)));
            default: return std::to_string(pick(lo, hi)) + "," + std::to_string(pick(lo, hi));
        }
    };
    int checked = 0;
    for (int i = 0; i < 300; ++i) {
        const auto text = field(0, 59) + " " + field(0, 23) + " " + field(1, 28) + " " + field(1, 12) + " " + field(0, 6);
        const auto c = CronExpr::parse(text);
        const auto start = make_utc(2021, 1, 1, 0, 0, 0) + minutes{pick(0, 400000)};
        const auto expected = walk_next(c, start, 60 * 24 * 400);
        if (expected == Timestamp{}) continue;
        EXPECT_EQ(c.next_fire(start), expected) << text;
        EXPECT_TRUE(c.matches(expected)) << text;
        ++checked;
    }
    EXPECT_GT(checked, 250);
}

TEST(CronText, CanonicalFormReparsesToSameSets) {
    std::mt19937 rng(5);
    for (const std::string text : {"*/3 * * * *", "0 0 1 1 *", "1,2,3,10-20/5 8-17 * 1-6 1-5", "59 23 31 12 0",
                                   "*/15 */6 1,15 * *"}) {
        const auto c = CronExpr::parse(text);
        EXPECT_EQ(CronExpr::parse(c.to_string()), c) << text << " -> " << c.to_string();
    }
    EXPECT_EQ(CronExpr::parse("* * * * *").to_string(), "* * * * *");
    EXPECT_EQ(CronExpr::parse("1,2,3,7 * * * *").to_string(), "1-3,7 * * * *");
}

TEST(CronNext, EveryThreeMinutesFires480TimesPerDay) {
    const auto c = CronExpr::parse("*/3 * * * *");
    const auto start = make_utc(2021, 7, 14, 0, 0, 0);
    const auto end = start + hours{24};
    int fires = 0;
    for (auto t = c.next_fire(start - minutes{1}); t < end; t = c.next_fire(t)) {
        EXPECT_EQ(duration_cast<minutes>(t - start).count() % 3, 0);
        ++fires;
    }
    EXPECT_EQ(fires, 480);
}
