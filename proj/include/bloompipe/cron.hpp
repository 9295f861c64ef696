#pragma once

#include <bitset>
#include <cstddef>
#include <string>
#include <string_view>

#include "bloompipe/error.hpp"
#include "bloompipe/time.hpp"

namespace bloompipe {

/// Malformed cron text; position is the 0-based character offset.
class CronParseError : public Error {
public:
    CronParseError(Errc code, std::size_t position, const std::string& reason)
        : Error(code, reason + " at position " + std::to_string(position)),
          position_(position),
          reason_(reason) {}

    std::size_t position() const noexcept { return position_; }
    const std::string& reason() const noexcept { return reason_; }

private:
    std::size_t position_;
    std::string reason_;
};

/// Five-field POSIX cron expression evaluated in UTC.
///
/// Fields: minute (0-59), hour (0-23), day of month (1-31), month (1-12),
/// day of week (0-6, 0 = Sunday). Each field accepts `*`, lists, ranges and
/// steps (`*/n`, `a-b/n`, `a/n`). When both day fields are restricted a date
/// matches if either one does; otherwise the restricted one decides.
class CronExpr {
public:
    static CronExpr parse(std::string_view text);

    /// Smallest minute-aligned instant strictly after `after` that matches.
    /// Throws Error{NoFireWithinHorizon} if none exists within five years.
    Timestamp next_fire(Timestamp after) const;

    bool matches(Timestamp t) const;

    /// Canonical text: `*` for full fields, otherwise a comma list where
    /// consecutive runs collapse to ranges. Reparses to identical sets.
    std::string to_string() const;

    const std::bitset<60>& minutes() const { return minute_; }
    const std::bitset<24>& hours() const { return hour_; }
    const std::bitset<32>& days_of_month() const { return dom_; }  // bit 0 unused
    const std::bitset<13>& months() const { return month_; }        // bit 0 unused
    const std::bitset<7>& days_of_week() const { return dow_; }

    bool operator==(const CronExpr&) const = default;

private:
    bool day_matches(int dom, unsigned dow) const;

    std::bitset<60> minute_;
    std::bitset<24> hour_;
    std::bitset<32> dom_;
    std::bitset<13> month_;
    std::bitset<7> dow_;
};

}  // namespace bloompipe
