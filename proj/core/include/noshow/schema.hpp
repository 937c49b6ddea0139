#pragma once

#include <array>
#include <compare>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "noshow/error.hpp"
#include "noshow/time.hpp"

namespace noshow {

enum class Outcome { Attended, Missed, Pending };

std::string_view to_string(Outcome outcome) noexcept;
/// Case-insensitive "attended" / "missed" / "pending".
std::optional<Outcome> parse_outcome(std::string_view text);

/// One scheduled visit. Carries no patient identifying fields beyond an
/// opaque id.
struct AppointmentRecord {
  std::string appointment_id;
  std::string provider_id;
  std::string provider_specialty;
  std::string patient_id;
  std::string site_id;
  Timestamp scheduled_at;
  Timestamp booked_at;
  int duration_minutes = 15;
  Outcome outcome = Outcome::Pending;

  friend bool operator==(const AppointmentRecord&, const AppointmentRecord&) = default;
};

inline constexpr int kMinDurationMinutes = 5;
inline constexpr int kMaxDurationMinutes = 240;

/// Canonical column order of the record CSV.
inline constexpr std::array<std::string_view, 9> kRecordFields = {
    "appointment_id", "provider_id", "provider_specialty", "patient_id", "site_id",
    "scheduled_at",   "booked_at",   "duration_minutes",   "outcome"};

/// Binary no-show label: 1 = missed, 0 = attended.
struct OutcomeLabel {
  bool missed = false;
  int value() const noexcept { return missed ? 1 : 0; }
  friend bool operator==(const OutcomeLabel&, const OutcomeLabel&) = default;
};

/// Pending appointments have no label.
std::optional<OutcomeLabel> label_of(Outcome outcome) noexcept;

/// A provider's [start_hour:00, start_hour+1:00) window on a local date.
struct HourBlock {
  Date date;
  int start_hour = 0;
  std::string provider_id;

  friend bool operator==(const HourBlock&, const HourBlock&) = default;
  friend auto operator<=>(const HourBlock&, const HourBlock&) = default;
};

/// Assigns by appointment start only, in the timestamp's local time.
HourBlock block_of(const Timestamp& scheduled_at, std::string provider_id);

struct FieldError {
  ErrorCode kind;
  std::string field;
  std::string message;
};

struct ValidationResult {
  std::optional<AppointmentRecord> record;
  std::vector<FieldError> errors;

  bool ok() const noexcept { return record.has_value(); }
  std::string summary() const;
};

using FieldMap = std::map<std::string, std::string, std::less<>>;

/// Checks every field and reports all violations together. A missing or
/// empty duration falls back to 15 minutes.
ValidationResult validate_record(const FieldMap& raw);

FieldMap to_fields(const AppointmentRecord& record);

void write_records_csv(std::ostream& out, std::span<const AppointmentRecord> records);

/// Sort key used everywhere records must be ordered: scheduled instant, then id.
bool scheduled_before(const AppointmentRecord& a, const AppointmentRecord& b) noexcept;

}  // namespace noshow
