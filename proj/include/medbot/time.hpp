#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace medbot {

using Timestamp = std::chrono::sys_seconds;
using Date = std::chrono::year_month_day;
using YearMonth = std::chrono::year_month;

// "YYYY-MM-DD"; std::nullopt when the text is not a valid calendar date.
std::optional<Date> parse_date(std::string_view text);
std::string format_date(const Date& d);

// "YYYY-MM"
std::string format_year_month(const YearMonth& ym);
std::optional<YearMonth> parse_year_month(std::string_view text);

// "YYYY-MM-DDTHH:MM:SSZ" (UTC, whole seconds). A bare date is accepted as midnight.
std::optional<Timestamp> parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp t);

}  // namespace medbot
