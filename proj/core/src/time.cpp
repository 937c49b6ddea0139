#include "noshow/time.hpp"

#include <charconv>
#include <cstdio>
#include <ctime>
#include <iomanip>
#include <sstream>

namespace noshow {

namespace {

constexpr std::int64_t kMinutesPerDay = 24 * 60;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

bool read_int(std::string_view text, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > text.size()) return false;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (text[i] < '0' || text[i] > '9') return false;
  }
  auto r = std::from_chars(text.data() + pos, text.data() + pos + len, out);
  return r.ec == std::errc{};
}

std::optional<Date> make_date(int y, int m, int d) {
  using namespace std::chrono;
  year_month_day ymd{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return sys_days{ymd};
}

}  // namespace

Timestamp Timestamp::from_local(Date date, int hour, int minute, int offset_minutes) {
  return {date.time_since_epoch().count() * kMinutesPerDay + hour * 60 + minute, offset_minutes};
}

Date Timestamp::local_date() const noexcept {
  return Date{std::chrono::days{floor_div(local_minutes_, kMinutesPerDay)}};
}

int Timestamp::minute_of_day() const noexcept {
  return static_cast<int>(local_minutes_ - floor_div(local_minutes_, kMinutesPerDay) * kMinutesPerDay);
}

int Timestamp::hour() const noexcept { return minute_of_day() / 60; }
int Timestamp::minute() const noexcept { return minute_of_day() % 60; }

std::optional<int> parse_utc_offset(std::string_view text) {
  if (text == "Z" || text == "z") return 0;
  if (text.size() != 6 || (text[0] != '+' && text[0] != '-') || text[3] != ':') return std::nullopt;
  int hh = 0, mm = 0;
  if (!read_int(text, 1, 2, hh) || !read_int(text, 4, 2, mm)) return std::nullopt;
  if (hh > 14 || mm > 59) return std::nullopt;
  int total = hh * 60 + mm;
  return text[0] == '-' ? -total : total;
}

std::string format_utc_offset(int offset_minutes) {
  char sign = offset_minutes < 0 ? '-' : '+';
  int a = offset_minutes < 0 ? -offset_minutes : offset_minutes;
  char buf[16];
  std::snprintf(buf, sizeof buf, "%c%02d:%02d", sign, a / 60, a % 60);
  return buf;
}

std::optional<Date> parse_date(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  int y = 0, m = 0, d = 0;
  if (!read_int(text, 0, 4, y) || !read_int(text, 5, 2, m) || !read_int(text, 8, 2, d)) {
    return std::nullopt;
  }
  return make_date(y, m, d);
}

std::string format_date(Date date) {
  using namespace std::chrono;
  year_month_day ymd{date};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::optional<Timestamp> parse_timestamp(std::string_view text) {
  if (text.size() < 17) return std::nullopt;
  auto date = parse_date(text.substr(0, 10));
  if (!date || (text[10] != 'T' && text[10] != ' ') || text[13] != ':') return std::nullopt;
  int hh = 0, mm = 0;
  if (!read_int(text, 11, 2, hh) || !read_int(text, 14, 2, mm) || hh > 23 || mm > 59) {
    return std::nullopt;
  }
  std::size_t pos = 16;
  if (pos < text.size() && text[pos] == ':') {
    int ss = 0;
    if (!read_int(text, pos + 1, 2, ss) || ss > 59) return std::nullopt;
    pos += 3;
  }
  auto offset = parse_utc_offset(text.substr(pos));
  if (!offset) return std::nullopt;
  return Timestamp::from_local(*date, hh, mm, *offset);
}

std::optional<Timestamp> parse_timestamp(std::string_view text, std::string_view format,
                                         int offset_minutes) {
  if (format == "iso") return parse_timestamp(text);
  std::tm tm{};
  std::istringstream in{std::string(text)};
  in >> std::get_time(&tm, std::string(format).c_str());
  if (in.fail()) return std::nullopt;
  in >> std::ws;
  if (!in.eof()) return std::nullopt;
  auto date = make_date(tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday);
  if (!date) return std::nullopt;
  return Timestamp::from_local(*date, tm.tm_hour, tm.tm_min, offset_minutes);
}

std::string format_timestamp(const Timestamp& ts) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "T%02d:%02d", ts.hour(), ts.minute());
  return format_date(ts.local_date()) + buf + format_utc_offset(ts.offset_minutes());
}

int iso_weekday_index(Date date) noexcept {
  return static_cast<int>(std::chrono::weekday{date}.iso_encoding()) - 1;
}

Date week_start(Date date) noexcept { return date - std::chrono::days{iso_weekday_index(date)}; }

double days_between(const Timestamp& from, const Timestamp& to) noexcept {
  return static_cast<double>(to.utc_minutes() - from.utc_minutes()) / static_cast<double>(kMinutesPerDay);
}

}  // namespace noshow
