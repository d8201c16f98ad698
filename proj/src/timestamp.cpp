#include "memoria/timestamp.hpp"

#include <cctype>
#include <charconv>
#include <chrono>
#include <cstdio>

#include "memoria/error.hpp"

namespace memoria {

namespace {

bool read_digits(std::string_view text, std::size_t pos, std::size_t count, unsigned& out) {
  if (pos + count > text.size()) return false;
  for (std::size_t i = pos; i < pos + count; ++i) {
    if (!std::isdigit(static_cast<unsigned char>(text[i]))) return false;
  }
  auto res = std::from_chars(text.data() + pos, text.data() + pos + count, out);
  return res.ec == std::errc{};
}

}  // namespace

std::optional<Timestamp> Timestamp::try_parse(std::string_view text) {
  // YYYY-MM-DD HH:MM
  if (text.size() != 16 || text[4] != '-' || text[7] != '-' || text[10] != ' ' || text[13] != ':') {
    return std::nullopt;
  }
  unsigned year = 0, month = 0, day = 0, hour = 0, minute = 0;
  if (!read_digits(text, 0, 4, year) || !read_digits(text, 5, 2, month) ||
      !read_digits(text, 8, 2, day) || !read_digits(text, 11, 2, hour) ||
      !read_digits(text, 14, 2, minute)) {
    return std::nullopt;
  }
  const std::chrono::year_month_day ymd{std::chrono::year{static_cast<int>(year)},
                                        std::chrono::month{month}, std::chrono::day{day}};
  if (!ymd.ok() || hour > 23 || minute > 59) return std::nullopt;
  return from_civil(static_cast<int>(year), month, day, hour, minute);
}

Timestamp Timestamp::parse(std::string_view text) {
  auto t = try_parse(text);
  if (!t) fail(ErrorCode::malformed, "invalid timestamp '" + std::string(text) + "'");
  return *t;
}

Timestamp Timestamp::from_civil(int year, unsigned month, unsigned day, unsigned hour,
                                unsigned minute) {
  const std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                                        std::chrono::day{day}};
  if (!ymd.ok() || hour > 23 || minute > 59) {
    fail(ErrorCode::reject_invalid, "invalid civil date/time");
  }
  const auto days = std::chrono::sys_days{ymd}.time_since_epoch().count();
  return from_minutes(static_cast<std::int64_t>(days) * 1440 + hour * 60 + minute);
}

Timestamp Timestamp::now() {
  const auto now = std::chrono::floor<std::chrono::minutes>(std::chrono::system_clock::now());
  return from_minutes(now.time_since_epoch().count());
}

std::string Timestamp::str() const {
  std::int64_t days = minutes_ / 1440;
  std::int64_t rem = minutes_ % 1440;
  if (rem < 0) {
    rem += 1440;
    days -= 1;
  }
  const std::chrono::year_month_day ymd{
      std::chrono::sys_days{std::chrono::days{static_cast<int>(days)}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02d:%02d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(rem / 60), static_cast<int>(rem % 60));
  return buf;
}

std::int64_t parse_duration_minutes(std::string_view text) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  if (text.empty()) fail(ErrorCode::malformed, "empty duration");
  std::int64_t scale = 1;
  switch (text.back()) {
    case 'm': scale = 1; text.remove_suffix(1); break;
    case 'h': scale = 60; text.remove_suffix(1); break;
    case 'd': scale = 1440; text.remove_suffix(1); break;
    default: break;
  }
  std::int64_t value = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size() || value < 0) {
    fail(ErrorCode::malformed, "invalid duration '" + std::string(text) + "'");
  }
  return value * scale;
}

}  // namespace memoria
