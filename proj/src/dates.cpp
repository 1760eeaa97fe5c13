#include "hydroseq/dates.hpp"

#include <charconv>
#include <cstdio>
#include <stdexcept>

namespace hydroseq {

namespace {

int parse_int(std::string_view s, std::string_view whole) {
    int v = 0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || ptr != end || s.empty()) {
        throw std::invalid_argument("malformed date '" + std::string(whole) + "'");
    }
    return v;
}

}  // namespace

Date Date::from_ymd(int year, unsigned month, unsigned day) {
    const std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                                          std::chrono::day{day}};
    if (!ymd.ok()) {
        throw std::invalid_argument("invalid calendar date " + std::to_string(year) + "-" +
                                    std::to_string(month) + "-" + std::to_string(day));
    }
    return Date{std::chrono::sys_days{ymd}};
}

Date Date::parse(std::string_view text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
        throw std::invalid_argument("malformed date '" + std::string(text) + "'");
    }
    const int y = parse_int(text.substr(0, 4), text);
    const int m = parse_int(text.substr(5, 2), text);
    const int d = parse_int(text.substr(8, 2), text);
    if (m < 1 || m > 12 || d < 1 || d > 31) {
        throw std::invalid_argument("malformed date '" + std::string(text) + "'");
    }
    return from_ymd(y, static_cast<unsigned>(m), static_cast<unsigned>(d));
}

std::string Date::iso() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", year(), month(), day());
    return buf;
}

YearMonth YearMonth::parse(std::string_view text) {
    if (text.size() != 7 || text[4] != '-') {
        throw std::invalid_argument("malformed month '" + std::string(text) + "'");
    }
    const int y = parse_int(text.substr(0, 4), text);
    const int m = parse_int(text.substr(5, 2), text);
    if (m < 1 || m > 12) throw std::invalid_argument("malformed month '" + std::string(text) + "'");
    return {y, static_cast<unsigned>(m)};
}

YearMonth YearMonth::from_serial(std::int64_t s) {
    std::int64_t y = s / 12;
    std::int64_t m = s % 12;
    if (m < 0) {
        m += 12;
        y -= 1;
    }
    return {static_cast<int>(1970 + y), static_cast<unsigned>(m + 1)};
}

unsigned YearMonth::days_in_month() const {
    const std::chrono::year_month_day_last last{std::chrono::year{year} / std::chrono::month{month} /
                                                std::chrono::last};
    return static_cast<unsigned>(last.day());
}

std::string YearMonth::iso() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u", year, month);
    return buf;
}

}  // namespace hydroseq
