#include "olm/date.hpp"

#include "olm/errors.hpp"

#include <array>
#include <charconv>
#include <cstdio>

namespace olm {

namespace {

bool leap_year(int y) {
    return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
}

int days_in_month(int y, int m) {
    static constexpr std::array<int, 12> kDays = {31, 28, 31, 30, 31, 30,
                                                  31, 31, 30, 31, 30, 31};
    if (m == 2 && leap_year(y)) return 29;
    return kDays[m - 1];
}

int parse_component(std::string_view text, std::size_t pos, std::size_t len,
                    std::string_view whole) {
    int value = 0;
    const char* first = text.data() + pos;
    const char* last = first + len;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) {
        throw ValidationError("invalid date '" + std::string(whole) +
                              "': expected YYYY-MM-DD");
    }
    return value;
}

} // namespace

bool Date::valid() const {
    if (year < 1 || year > 9999) return false;
    if (month < 1 || month > 12) return false;
    if (day < 1 || day > days_in_month(year, month)) return false;
    return true;
}

Date parse_date(std::string_view text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
        throw ValidationError("invalid date '" + std::string(text) +
                              "': expected YYYY-MM-DD");
    }
    Date d;
    d.year = parse_component(text, 0, 4, text);
    d.month = parse_component(text, 5, 2, text);
    d.day = parse_component(text, 8, 2, text);
    if (!d.valid()) {
        throw ValidationError("invalid date '" + std::string(text) +
                              "': not a calendar date");
    }
    return d;
}

std::string format_date(const Date& d) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", d.year, d.month, d.day);
    return buf;
}

} // namespace olm
