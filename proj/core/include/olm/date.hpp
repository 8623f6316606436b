#pragma once

#include <compare>
#include <string>
#include <string_view>

namespace olm {

// Calendar date, ISO-8601 text form YYYY-MM-DD.
struct Date {
    int year = 0;
    int month = 0;
    int day = 0;

    auto operator<=>(const Date&) const = default;

    bool valid() const;
    // True for the default-constructed sentinel (no date set).
    bool empty() const { return year == 0 && month == 0 && day == 0; }
};

// Throws ValidationError on anything that is not a valid calendar date.
Date parse_date(std::string_view text);

std::string format_date(const Date& d);

} // namespace olm
