#include "bloompipe/time.hpp"

#include <cstdio>

#include "bloompipe/error.hpp"

namespace bloompipe {

namespace chr = std::chrono;

std::string format_rfc3339(Timestamp t) {
    const auto day = chr::floor<chr::days>(t);
    const chr::year_month_day ymd{day};
    const chr::hh_mm_ss hms{t - day};
    const auto ms = hms.subseconds().count();
    char buf[40];
    if (ms == 0) {
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", int(ymd.year()),
                      unsigned(ymd.month()), unsigned(ymd.day()), int(hms.hours().count()),
                      int(hms.minutes().count()), int(hms.seconds().count()));
    } else {
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d.%03dZ", int(ymd.year()),
                      unsigned(ymd.month()), unsigned(ymd.day()), int(hms.hours().count()),
                      int(hms.minutes().count()), int(hms.seconds().count()), int(ms));
    }
    return buf;
}

Timestamp make_utc(int year, unsigned month, unsigned day, int hour, int minute, int second) {
    const chr::sys_days d{chr::year{year} / chr::month{month} / chr::day{day}};
    return Timestamp{d} + chr::hours{hour} + chr::minutes{minute} + chr::seconds{second};
}

Timestamp parse_rfc3339(std::string_view text) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0, consumed = 0;
    const std::string str(text);
    if (std::sscanf(str.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%n", &y, &mo, &d, &h, &mi, &s,
                    &consumed) != 6 ||
        consumed != 19) {
        throw Error(Errc::Parse, "invalid RFC 3339 timestamp: " + str);
    }
    int ms = 0;
    std::size_t pos = 19;
    if (pos < str.size() && str[pos] == '.') {
        ++pos;
        int digits = 0;
        while (pos < str.size() && str[pos] >= '0' && str[pos] <= '9') {
            if (digits < 3) ms = ms * 10 + (str[pos] - '0');
            ++digits;
            ++pos;
        }
        if (digits == 0) throw Error(Errc::Parse, "invalid RFC 3339 timestamp: " + str);
        for (; digits < 3; ++digits) ms *= 10;
    }
    if (pos + 1 != str.size() || (str[pos] != 'Z' && str[pos] != 'z')) {
        throw Error(Errc::Parse, "RFC 3339 timestamp must be UTC ('Z'): " + str);
    }
    const chr::year_month_day ymd{chr::year{y}, chr::month{unsigned(mo)}, chr::day{unsigned(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || s > 59) {
        throw Error(Errc::Parse, "timestamp out of range: " + str);
    }
    return make_utc(y, unsigned(mo), unsigned(d), h, mi, s) + Millis{ms};
}

Timestamp SystemClock::now() const {
    return chr::time_point_cast<Millis>(chr::system_clock::now());
}

Timestamp ManualClock::now() const {
    std::lock_guard lock(mutex_);
    return now_;
}

void ManualClock::set(Timestamp t) {
    std::lock_guard lock(mutex_);
    now_ = t;
}

void ManualClock::advance(Millis d) {
    std::lock_guard lock(mutex_);
    now_ += d;
}

}  // namespace bloompipe
