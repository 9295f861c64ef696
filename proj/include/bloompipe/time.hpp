#pragma once

#include <chrono>
#include <mutex>
#include <string>
#include <string_view>

namespace bloompipe {

using Timestamp = std::chrono::time_point<std::chrono::system_clock, std::chrono::milliseconds>;
using Millis = std::chrono::milliseconds;

/// RFC 3339 UTC, e.g. "2021-07-14T12:03:00Z". Fractional seconds are
/// emitted only when the timestamp is not on a whole second.
std::string format_rfc3339(Timestamp t);

/// Accepts "YYYY-MM-DDTHH:MM:SS[.fff]Z". Throws Error{Parse}.
Timestamp parse_rfc3339(std::string_view text);

Timestamp make_utc(int year, unsigned month, unsigned day, int hour = 0, int minute = 0,
                   int second = 0);

/// Time source shared by the scheduler, the compute pool and run records.
class Clock {
public:
    virtual ~Clock() = default;
    virtual Timestamp now() const = 0;
};

class SystemClock final : public Clock {
public:
    Timestamp now() const override;
};

/// Manually advanced clock for simulated-time tests (PIPE_FAKE_CLOCK=1).
class ManualClock final : public Clock {
public:
    explicit ManualClock(Timestamp start) : now_(start) {}

    Timestamp now() const override;
    void set(Timestamp t);
    void advance(Millis d);

private:
    mutable std::mutex mutex_;
    Timestamp now_;
};

}  // namespace bloompipe
