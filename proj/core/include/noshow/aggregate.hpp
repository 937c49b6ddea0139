#pragma once

#include <nlohmann/json.hpp>

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "noshow/schema.hpp"

namespace noshow {

enum class BlockColor { Yellow, Orange, Red };

std::string_view to_string(BlockColor color) noexcept;

/// Sum of per-appointment no-show probabilities. Empty input gives 0.
/// Throws OutOfRangeProbability for values outside [0, 1].
double expected_no_shows(std::span<const double> probabilities);

/// Yellow on [0, 1), Orange on [1, 2], Red above 2. Throws NegativeInput.
BlockColor color_code(double expected_misses);

/// floor(expected_misses): keeps the expected attended load at or under the
/// scheduled count. Throws NegativeInput.
int recommend_overbook(double expected_misses);

struct ScoredAppointment {
  std::string appointment_id;
  std::string provider_id;
  std::string provider_specialty;
  std::string site_id;
  Timestamp scheduled_at;
  double probability = 0.0;

  friend bool operator==(const ScoredAppointment&, const ScoredAppointment&) = default;
};

struct TooltipEntry {
  std::string appointment_id;
  Timestamp scheduled_at;
  double probability = 0.0;
};

struct BlockSummary {
  HourBlock block;
  double expected_misses = 0.0;
  int n_scheduled = 0;
  BlockColor color = BlockColor::Yellow;
  int recommended_overbook = 0;
  std::vector<TooltipEntry> appointments;  // ordered by time, then id
};

/// Summarizes one block; every appointment is assumed to belong to it.
BlockSummary summarize_block(HourBlock block, std::vector<TooltipEntry> appointments);

struct ClinicHours {
  int open_hour = 8;
  int close_hour = 16;
  std::vector<int> weekdays = {0, 1, 2, 3, 4};  // 0 = Monday

  bool is_clinic_day(Date date) const;
  std::vector<Date> clinic_days(Date first, Date last) const;
};

/// Inclusive date range; normally Monday through Sunday.
struct WeekRange {
  Date first;
  Date last;

  static WeekRange containing(Date date);
};

struct HeatmapFilter {
  std::optional<std::string> provider;
  std::optional<std::string> specialty;
  std::optional<std::string> site;

  bool matches(const ScoredAppointment& a) const;
};

inline constexpr std::string_view kAllProviders = "*";

/// Clinic days (columns) x operating hours (rows). Cells are stored
/// date-major: cells[d * hours.size() + h].
struct HeatmapGrid {
  std::vector<Date> dates;
  std::vector<int> hours;
  std::string provider_id;
  std::vector<BlockSummary> cells;
  /// Filtered appointments in the week that fall outside clinic hours.
  std::size_t unplaced = 0;

  const BlockSummary& cell(std::size_t date_index, std::size_t hour_index) const {
    return cells[date_index * hours.size() + hour_index];
  }
  const BlockSummary* find(Date date, int hour) const;
  double total_expected() const;
  int total_scheduled() const;
};

/// One grid over every appointment passing `filter`; the grid is labelled
/// with the provider filter or "*" when combined. Throws EmptyWeek.
HeatmapGrid build_heatmap(std::span<const ScoredAppointment> scored, WeekRange week, const HeatmapFilter& filter,
                          const ClinicHours& hours);

/// One grid per provider (sorted by id) among appointments passing `filter`.
std::vector<HeatmapGrid> build_provider_heatmaps(std::span<const ScoredAppointment> scored, WeekRange week,
                                                 const HeatmapFilter& filter, const ClinicHours& hours);

nlohmann::ordered_json block_json(const BlockSummary& cell);

/// {week, dates[], hours[], providers[], cells[{date, hour, provider_id,
/// expected, n_scheduled, color, overbook, appointments[]}], unplaced}
nlohmann::ordered_json heatmap_json(WeekRange week, std::span<const std::string> providers,
                                    std::span<const HeatmapGrid> grids);

/// appointment_id, provider_id, provider_specialty, site_id, scheduled_at, probability
void write_scored_csv(std::ostream& out, std::span<const ScoredAppointment> scored);
std::vector<ScoredAppointment> read_scored_csv(std::istream& in);

}  // namespace noshow
