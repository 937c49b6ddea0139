#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "noshow/io.hpp"
#include "noshow/schema.hpp"

namespace noshow {

// ---- vendor export parsing ---------------------------------------------------

/// Maps a vendor export onto the canonical record schema.
///
/// Mapping files are key-value:
///
///     column.ApptID     = appointment_id
///     column.ApptTime   = scheduled_at
///     timestamp_format  = %m/%d/%Y %H:%M     (or "iso")
///     utc_offset        = -05:00              (applied to zone-less formats)
///     outcome.No Show   = missed
///     column.CancelTime = cancelled_at        (optional)
///     cancel_window_hours = 24
///
/// Every canonical field except duration_minutes must be mapped exactly once;
/// duration_minutes and cancelled_at may be left unmapped.
struct ColumnMapping {
  std::map<std::string, std::string> vendor_to_canonical;
  std::string timestamp_format = "iso";
  int utc_offset_minutes = 0;
  std::map<std::string, Outcome> outcome_values;  // keys lower-cased
  int cancel_window_hours = 24;

  /// Identity mapping for the canonical record CSV.
  static ColumnMapping canonical();
  static ColumnMapping from_config(const KeyValueConfig& cfg);

  /// Throws Error(InvalidArgument) when a field is unmapped or mapped twice.
  void validate() const;
};

struct RowError {
  std::size_t row = 0;  // 1-based data row (header excluded)
  std::string reason;
};

struct ExportParseResult {
  std::vector<AppointmentRecord> records;
  std::vector<RowError> errors;
  /// Rows cancelled earlier than the cancellation window.
  std::size_t dropped_cancellations = 0;
  std::size_t rows_read = 0;
};

/// Valid rows become records; every other row is accounted for as an error
/// or an early cancellation. Throws EmptyFile / UnmappableHeader.
ExportParseResult parse_export(std::istream& in, const ColumnMapping& mapping);

/// parse_export with the canonical mapping.
ExportParseResult read_records_csv(std::istream& in);
/// Reads the canonical record CSV and throws InvalidRecord on any bad row.
std::vector<AppointmentRecord> load_records_csv(const std::filesystem::path& path);

// ---- no-show rates -----------------------------------------------------------

/// missed / scheduled. Throws UndefinedRate when scheduled == 0.
double no_show_rate(long missed, long scheduled);

/// (missed + k * global) / (scheduled + k), shrinking thin histories toward the
/// clinic-wide rate.
double smoothed_hist_rate(long missed, long scheduled, double global_rate, double pseudo_count);

inline constexpr double kDefaultPseudoCount = 5.0;

// ---- features ----------------------------------------------------------------

enum class Season { Winter, Spring, Summer, Fall };

std::string_view to_string(Season season) noexcept;
std::optional<Season> parse_season(std::string_view text);
/// Meteorological quarters: Dec-Feb winter, Mar-May spring, Jun-Aug summer.
Season season_of(Date date) noexcept;

struct FeatureVector {
  std::string appointment_id;
  double lead_time_days = 0.0;
  int hour_of_day = 0;
  int day_of_week = 0;  // 0 = Monday
  Season season = Season::Winter;
  std::string provider_specialty;
  std::string site_id;
  double patient_hist_rate = 0.0;
  int patient_prior_appointments = 0;
  std::optional<OutcomeLabel> label;

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

struct PatientCounts {
  long missed = 0;
  long scheduled = 0;
};

/// Per-patient outcome tally where an appointment only counts toward
/// appointments on later local dates.
class PatientHistory {
 public:
  /// Counts from labeled appointments on dates strictly before `date`.
  PatientCounts counts_before(const std::string& patient_id, Date date) const;
  void add(const std::string& patient_id, Date date, OutcomeLabel label);

 private:
  struct Entry {
    Date date;
    bool missed;
  };
  struct State {
    PatientCounts settled;
    Date settled_through{};  // all entries before this date are in `settled`
    std::vector<Entry> recent;
  };
  std::unordered_map<std::string, State> states_;
};

FeatureVector make_features(const AppointmentRecord& record, PatientCounts prior, double global_rate,
                            double pseudo_count = kDefaultPseudoCount);

/// Missed fraction over labeled records. Throws UndefinedRate if none.
double global_no_show_rate(std::span<const AppointmentRecord> records);

/// Records must be sorted by (scheduled instant, appointment_id); throws
/// UnsortedInput otherwise.
std::vector<FeatureVector> engineer_features(std::span<const AppointmentRecord> records,
                                             double global_rate,
                                             double pseudo_count = kDefaultPseudoCount);

/// Column order of the feature-table CSV.
inline constexpr std::array<std::string_view, 10> kFeatureColumns = {
    "appointment_id", "lead_time_days",    "hour_of_day",        "day_of_week",
    "season",         "provider_specialty", "site_id",           "patient_hist_rate",
    "patient_prior_appointments", "label"};

void write_features_csv(std::ostream& out, std::span<const FeatureVector> features);
/// Throws SchemaMismatch if the header differs from kFeatureColumns.
std::vector<FeatureVector> read_features_csv(std::istream& in);

}  // namespace noshow
