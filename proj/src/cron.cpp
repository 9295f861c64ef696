#include "bloompipe/cron.hpp"

#include <charconv>
#include <vector>

namespace bloompipe {

namespace chr = std::chrono;

namespace {

struct FieldSpec {
    const char* name;
    int lo;
    int hi;
};

constexpr FieldSpec kFields[5] = {
    {"minute", 0, 59}, {"hour", 0, 23}, {"day-of-month", 1, 31}, {"month", 1, 12}, {"day-of-week", 0, 6}};

class FieldParser {
public:
    FieldParser(std::string_view text, std::size_t offset, const FieldSpec& spec)
        : text_(text), offset_(offset), spec_(spec) {}

    std::vector<bool> parse() {
        std::vector<bool> set(spec_.hi + 1, false);
        std::size_t start = 0;
        for (;;) {
            const auto comma = text_.find(',', start);
            const auto end = comma == std::string_view::npos ? text_.size() : comma;
            parse_item(start, end, set);
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        return set;
    }

private:
    [[noreturn]] void syntax(std::size_t pos, const std::string& why) const {
        throw CronParseError(Errc::CronSyntax, offset_ + pos, std::string(spec_.name) + ": " + why);
    }

    int number(std::size_t& pos, std::size_t end) const {
        const auto begin = pos;
        while (pos < end && text_[pos] >= '0' && text_[pos] <= '9') ++pos;
        if (pos == begin) syntax(begin, "expected a number");
        int value = 0;
        auto [p, ec] = std::from_chars(text_.data() + begin, text_.data() + pos, value);
        if (ec != std::errc{}) syntax(begin, "number too large");
        return value;
    }

    int bounded(std::size_t& pos, std::size_t end) const {
        const auto begin = pos;
        const int v = number(pos, end);
        if (v < spec_.lo || v > spec_.hi) {
            throw CronParseError(Errc::CronRange, offset_ + begin,
                                 std::string(spec_.name) + " value " + std::to_string(v) +
                                     " outside " + std::to_string(spec_.lo) + "-" +
                                     std::to_string(spec_.hi));
        }
        return v;
    }

    void parse_item(std::size_t pos, std::size_t end, std::vector<bool>& set) const {
        if (pos == end) syntax(pos, "empty list element");
        int lo = spec_.lo;
        int hi = spec_.hi;
        bool ranged = false;
        if (text_[pos] == '*') {
            ++pos;
            ranged = true;
        } else {
            lo = bounded(pos, end);
            hi = lo;
            if (pos < end && text_[pos] == '-') {
                ++pos;
                const auto at = pos;
                hi = bounded(pos, end);
                if (hi < lo) {
                    throw CronParseError(Errc::CronRange, offset_ + at,
                                         std::string(spec_.name) + ": range end before start");
                }
                ranged = true;
            }
        }
        int step = 1;
        if (pos < end && text_[pos] == '/') {
            ++pos;
            const auto at = pos;
            step = number(pos, end);
            if (step < 1) {
                throw CronParseError(Errc::CronRange, offset_ + at,
                                     std::string(spec_.name) + ": step must be >= 1");
            }
            if (!ranged) hi = spec_.hi;  // "a/n" means a through max
        }
        if (pos != end) syntax(pos, "unexpected character '" + std::string(1, text_[pos]) + "'");
        for (int v = lo; v <= hi; v += step) set[v] = true;
    }

    std::string_view text_;
    std::size_t offset_;
    const FieldSpec& spec_;
};

template <std::size_t N>
void assign(std::bitset<N>& bits, const std::vector<bool>& set) {
    for (std::size_t i = 0; i < set.size() && i < N; ++i) bits[i] = set[i];
}

template <std::size_t N>
bool full(const std::bitset<N>& bits, int lo, int hi) {
    for (int i = lo; i <= hi; ++i)
        if (!bits[i]) return false;
    return true;
}

template <std::size_t N>
std::string format_field(const std::bitset<N>& bits, int lo, int hi) {
    if (full(bits, lo, hi)) return "*";
    std::string out;
    for (int i = lo; i <= hi;) {
        if (!bits[i]) {
            ++i;
            continue;
        }
        int j = i;
        while (j + 1 <= hi && bits[j + 1]) ++j;
        if (!out.empty()) out += ',';
        out += std::to_string(i);
        if (j > i) out += "-" + std::to_string(j);
        i = j + 1;
    }
    return out;
}

}  // namespace

CronExpr CronExpr::parse(std::string_view text) {
    std::vector<std::pair<std::size_t, std::string_view>> fields;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && (text[i] == ' ' || text[i] == '\t')) ++i;
        if (i >= text.size()) break;
        const auto begin = i;
        while (i < text.size() && text[i] != ' ' && text[i] != '\t') ++i;
        fields.emplace_back(begin, text.substr(begin, i - begin));
    }
    if (fields.size() != 5) {
        const auto at = fields.size() > 5 ? fields[5].first : text.size();
        throw CronParseError(Errc::CronSyntax, at,
                             "expected 5 fields, found " + std::to_string(fields.size()));
    }
    CronExpr expr;
    std::vector<bool> sets[5];
    for (std::size_t f = 0; f < 5; ++f) {
        sets[f] = FieldParser(fields[f].second, fields[f].first, kFields[f]).parse();
    }
    assign(expr.minute_, sets[0]);
    assign(expr.hour_, sets[1]);
    assign(expr.dom_, sets[2]);
    assign(expr.month_, sets[3]);
    assign(expr.dow_, sets[4]);
    return expr;
}

bool CronExpr::day_matches(int dom, unsigned dow) const {
    const bool dom_restricted = !full(dom_, 1, 31);
    const bool dow_restricted = !full(dow_, 0, 6);
    if (dom_restricted && dow_restricted) return dom_[dom] || dow_[dow];
    return dom_[dom] && dow_[dow];
}

bool CronExpr::matches(Timestamp t) const {
    const auto day = chr::floor<chr::days>(t);
    const chr::year_month_day ymd{day};
    const chr::weekday wd{day};
    const chr::hh_mm_ss hms{t - day};
    return minute_[hms.minutes().count()] && hour_[hms.hours().count()] &&
           month_[unsigned(ymd.month())] && day_matches(int(unsigned(ymd.day())), wd.c_encoding());
}

Timestamp CronExpr::next_fire(Timestamp after) const {
    auto t = chr::floor<chr::minutes>(after) + chr::minutes{1};
    const auto horizon = after + chr::days{5 * 366};
    while (t <= horizon) {
        const auto day = chr::floor<chr::days>(t);
        const chr::year_month_day ymd{day};
        if (!month_[unsigned(ymd.month())]) {
            const auto first_next = chr::year_month_day{ymd.year() / ymd.month() / 1} + chr::months{1};
            t = chr::sys_days{first_next};
            continue;
        }
        if (!day_matches(int(unsigned(ymd.day())), chr::weekday{day}.c_encoding())) {
            t = day + chr::days{1};
            continue;
        }
        const chr::hh_mm_ss hms{t - day};
        if (!hour_[hms.hours().count()]) {
            t = chr::floor<chr::hours>(t) + chr::hours{1};
            continue;
        }
        if (!minute_[hms.minutes().count()]) {
            t += chr::minutes{1};
            continue;
        }
        return chr::time_point_cast<Millis>(t);
    }
    throw Error(Errc::NoFireWithinHorizon,
                "cron expression '" + to_string() + "' has no fire time within 5 years");
}

std::string CronExpr::to_string() const {
    return format_field(minute_, 0, 59) + " " + format_field(hour_, 0, 23) + " " +
           format_field(dom_, 1, 31) + " " + format_field(month_, 1, 12) + " " +
           format_field(dow_, 0, 6);
}

}  // namespace bloompipe
