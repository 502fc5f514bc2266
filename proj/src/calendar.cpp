#include "raci/calendar.hpp"

#include <numeric>
#include <stdexcept>
#include <string>

namespace raci {

CalendarSpec CalendarSpec::uniform(int days_per_month) {
    CalendarSpec cal;
    cal.month_lengths.assign(12, days_per_month);
    cal.days_per_year = 12 * days_per_month;
    return cal;
}

void CalendarSpec::validate() const {
    if (month_lengths.size() != 12)
        throw std::invalid_argument("calendar: expected 12 months, got " +
                                    std::to_string(month_lengths.size()));
    for (int len : month_lengths)
        if (len <= 0) throw std::invalid_argument("calendar: month length must be positive");
    const int total = std::accumulate(month_lengths.begin(), month_lengths.end(), 0);
    if (total != days_per_year)
        throw std::invalid_argument("calendar: month lengths sum to " + std::to_string(total) +
                                    ", expected days_per_year = " + std::to_string(days_per_year));
}

int CalendarSpec::month_of_day(int day) const {
    if (day < 0 || day >= days_per_year)
        throw std::out_of_range("month_of_day: day " + std::to_string(day) + " outside [0, " +
                                std::to_string(days_per_year) + ")");
    int acc = 0;
    for (int m = 0; m < 12; ++m) {
        acc += month_lengths[m];
        if (day < acc) return m;
    }
    return 11;  // unreachable for a validated spec
}

std::pair<int, int> CalendarSpec::month_span(int m) const {
    if (m < 0 || m >= 12) throw std::out_of_range("month_span: month index out of range");
    int start = 0;
    for (int i = 0; i < m; ++i) start += month_lengths[i];
    return {start, month_lengths[m]};
}

}  // namespace raci
