#pragma once

#include <utility>
#include <vector>

namespace raci {

// Year layout shared by all samples of a dataset. Always 12 months; month
// lengths are configurable so tests can run on short years.
struct CalendarSpec {
    int days_per_year = 365;
    std::vector<int> month_lengths = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};

    static CalendarSpec standard() { return CalendarSpec{}; }
    // 12 equal months of `days_per_month` days each
    static CalendarSpec uniform(int days_per_month);

    // throws std::invalid_argument on a malformed spec
    void validate() const;

    // month index in [0, 12) containing `day`; throws std::out_of_range
    int month_of_day(int day) const;

    // (first day, length) of month m
    std::pair<int, int> month_span(int m) const;

    bool operator==(const CalendarSpec&) const = default;
};

}  // namespace raci
