#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace memoria {

// Minute-precision wall-clock instant, no timezone. Canonical text form is
// "YYYY-MM-DD HH:MM".
class Timestamp {
 public:
  constexpr Timestamp() = default;
  static constexpr Timestamp from_minutes(std::int64_t minutes_since_epoch) {
    Timestamp t;
    t.minutes_ = minutes_since_epoch;
    return t;
  }

  // Throws Error{malformed} unless `text` is exactly the canonical form with a
  // valid calendar date and time of day.
  static Timestamp parse(std::string_view text);
  static std::optional<Timestamp> try_parse(std::string_view text);
  static Timestamp from_civil(int year, unsigned month, unsigned day, unsigned hour = 0,
                              unsigned minute = 0);
  // Host clock, truncated to the minute.
  static Timestamp now();

  std::string str() const;
  constexpr std::int64_t minutes() const { return minutes_; }

  constexpr Timestamp plus_minutes(std::int64_t delta) const {
    return from_minutes(minutes_ + delta);
  }
  constexpr std::int64_t minutes_since(Timestamp earlier) const {
    return minutes_ - earlier.minutes_;
  }

  constexpr auto operator<=>(const Timestamp&) const = default;

 private:
  std::int64_t minutes_ = 0;
};

// Parses "90m", "2h", "3d" or a bare minute count. Throws Error{malformed}.
std::int64_t parse_duration_minutes(std::string_view text);

}  // namespace memoria
