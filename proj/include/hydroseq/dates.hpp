#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>

namespace hydroseq {

/// Calendar day (proleptic Gregorian), stored as days since 1970-01-01.
class Date {
public:
    constexpr Date() = default;
    constexpr explicit Date(std::chrono::sys_days d) : days_(d.time_since_epoch().count()) {}

    static Date from_ymd(int year, unsigned month, unsigned day);
    /// Parses `YYYY-MM-DD`; throws std::invalid_argument on malformed or impossible dates.
    static Date parse(std::string_view text);

    std::chrono::sys_days sys() const { return std::chrono::sys_days{std::chrono::days{days_}}; }
    std::chrono::year_month_day ymd() const { return std::chrono::year_month_day{sys()}; }
    int year() const { return static_cast<int>(ymd().year()); }
    unsigned month() const { return static_cast<unsigned>(ymd().month()); }
    unsigned day() const { return static_cast<unsigned>(ymd().day()); }

    std::int64_t serial() const { return days_; }
    std::string iso() const;

    Date operator+(std::int64_t n) const { return from_serial(days_ + n); }
    Date operator-(std::int64_t n) const { return from_serial(days_ - n); }
    std::int64_t operator-(Date other) const { return days_ - other.days_; }
    auto operator<=>(const Date&) const = default;

    static Date from_serial(std::int64_t s) {
        Date d;
        d.days_ = s;
        return d;
    }

private:
    std::int64_t days_ = 0;
};

/// Inclusive date interval.
struct DateRange {
    Date first;
    Date last;

    bool contains(Date d) const { return first <= d && d <= last; }
    std::int64_t days() const { return last - first + 1; }
    bool operator==(const DateRange&) const = default;
};

/// Contiguous daily calendar: `start`, `start+1`, ..., `start+length-1`.
struct DateIndex {
    Date start;
    std::size_t length = 0;

    Date at(std::size_t i) const { return start + static_cast<std::int64_t>(i); }
    Date last() const { return at(length - 1); }
    /// Position of `d`, or -1 when outside the index.
    std::int64_t offset(Date d) const {
        const auto o = d - start;
        return (o < 0 || o >= static_cast<std::int64_t>(length)) ? -1 : o;
    }
    DateRange range() const { return {start, last()}; }
    bool operator==(const DateIndex&) const = default;
};

/// Calendar month key, e.g. 2004-07.
struct YearMonth {
    int year = 1970;
    unsigned month = 1;

    static YearMonth of(Date d) { return {d.year(), d.month()}; }
    /// Parses `YYYY-MM`.
    static YearMonth parse(std::string_view text);

    /// Months since 1970-01, usable as a dense index.
    std::int64_t serial() const { return static_cast<std::int64_t>(year - 1970) * 12 + (month - 1); }
    static YearMonth from_serial(std::int64_t s);
    YearMonth operator+(std::int64_t n) const { return from_serial(serial() + n); }
    std::int64_t operator-(YearMonth o) const { return serial() - o.serial(); }

    Date first_day() const { return Date::from_ymd(year, month, 1); }
    unsigned days_in_month() const;
    std::string iso() const;
    auto operator<=>(const YearMonth&) const = default;
};

}  // namespace hydroseq
