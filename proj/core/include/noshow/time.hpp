#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace noshow {

using Date = std::chrono::sys_days;

/// Minute-precision wall-clock time in the clinic's local zone, paired with
/// the UTC offset that was in effect. Ordering is by the UTC instant.
class Timestamp {
 public:
  constexpr Timestamp() = default;
  constexpr Timestamp(std::int64_t local_minutes, int offset_minutes)
      : local_minutes_(local_minutes), offset_minutes_(offset_minutes) {}

  static Timestamp from_local(Date date, int hour, int minute, int offset_minutes);

  std::int64_t local_minutes() const noexcept { return local_minutes_; }
  int offset_minutes() const noexcept { return offset_minutes_; }
  std::int64_t utc_minutes() const noexcept { return local_minutes_ - offset_minutes_; }

  Date local_date() const noexcept;
  int hour() const noexcept;
  int minute() const noexcept;
  /// Minutes elapsed since local midnight.
  int minute_of_day() const noexcept;

  Timestamp plus_minutes(std::int64_t minutes) const noexcept {
    return {local_minutes_ + minutes, offset_minutes_};
  }

  friend bool operator==(const Timestamp&, const Timestamp&) = default;
  friend std::strong_ordering operator<=>(const Timestamp& a, const Timestamp& b) noexcept {
    if (auto c = a.utc_minutes() <=> b.utc_minutes(); c != 0) return c;
    return a.offset_minutes_ <=> b.offset_minutes_;
  }

 private:
  std::int64_t local_minutes_ = 0;
  int offset_minutes_ = 0;
};

/// Parses `YYYY-MM-DDTHH:MM[:SS](Z|+HH:MM|-HH:MM)`. A space may replace `T`.
/// The offset is mandatory; seconds are accepted and truncated.
std::optional<Timestamp> parse_timestamp(std::string_view text);

/// Parses a timestamp with a strftime-style `format` (no zone) and attaches
/// `offset_minutes`. Format "iso" delegates to parse_timestamp.
std::optional<Timestamp> parse_timestamp(std::string_view text, std::string_view format,
                                         int offset_minutes);

std::string format_timestamp(const Timestamp& ts);

std::optional<Date> parse_date(std::string_view text);
std::string format_date(Date date);

/// "+HH:MM" / "-HH:MM" / "Z" to minutes east of UTC.
std::optional<int> parse_utc_offset(std::string_view text);
std::string format_utc_offset(int offset_minutes);

/// 0 = Monday ... 6 = Sunday.
int iso_weekday_index(Date date) noexcept;
/// Monday on or before `date`.
Date week_start(Date date) noexcept;

/// Lead time in fractional days between two instants (UTC arithmetic).
double days_between(const Timestamp& from, const Timestamp& to) noexcept;

}  // namespace noshow
