#include "noshow/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <set>

#include "noshow/io.hpp"

namespace noshow {

std::string_view to_string(BlockColor color) noexcept {
  switch (color) {
    case BlockColor::Yellow: return "yellow";
    case BlockColor::Orange: return "orange";
    case BlockColor::Red: return "red";
  }
  return "yellow";
}

double expected_no_shows(std::span<const double> probabilities) {
  double sum = 0.0;
  for (double p : probabilities) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw Error(ErrorCode::OutOfRangeProbability, "probability " + format_double(p) + " outside [0, 1]");
    }
    sum += p;
  }
  return sum;
}

BlockColor color_code(double expected_misses) {
  if (!(expected_misses >= 0.0)) throw Error(ErrorCode::NegativeInput, "expected misses must be nonnegative");
  if (expected_misses < 1.0) return BlockColor::Yellow;
  if (expected_misses <= 2.0) return BlockColor::Orange;
  return BlockColor::Red;
}

int recommend_overbook(double expected_misses) {
  if (!(expected_misses >= 0.0)) throw Error(ErrorCode::NegativeInput, "expected misses must be nonnegative");
  return static_cast<int>(std::floor(expected_misses));
}

BlockSummary summarize_block(HourBlock block, std::vector<TooltipEntry> appointments) {
  std::sort(appointments.begin(), appointments.end(), [](const TooltipEntry& a, const TooltipEntry& b) {
    if (a.scheduled_at != b.scheduled_at) return a.scheduled_at < b.scheduled_at;
    return a.appointment_id < b.appointment_id;
  });
  std::vector<double> probs;
  probs.reserve(appointments.size());
  for (const auto& a : appointments) probs.push_back(a.probability);
  BlockSummary s;
  s.block = std::move(block);
  s.expected_misses = expected_no_shows(probs);
  s.n_scheduled = static_cast<int>(appointments.size());
  s.color = color_code(s.expected_misses);
  s.recommended_overbook = recommend_overbook(s.expected_misses);
  s.appointments = std::move(appointments);
  return s;
}

bool ClinicHours::is_clinic_day(Date date) const {
  return std::find(weekdays.begin(), weekdays.end(), iso_weekday_index(date)) != weekdays.end();
}

std::vector<Date> ClinicHours::clinic_days(Date first, Date last) const {
  std::vector<Date> out;
  for (Date d = first; d <= last; d += std::chrono::days{1}) {
    if (is_clinic_day(d)) out.push_back(d);
  }
  return out;
}

WeekRange WeekRange::containing(Date date) {
  const Date start = week_start(date);
  return {start, start + std::chrono::days{6}};
}

bool HeatmapFilter::matches(const ScoredAppointment& a) const {
  return (!provider || a.provider_id == *provider) && (!specialty || a.provider_specialty == *specialty) &&
         (!site || a.site_id == *site);
}

const BlockSummary* HeatmapGrid::find(Date date, int hour) const {
  auto d = std::find(dates.begin(), dates.end(), date);
  auto h = std::find(hours.begin(), hours.end(), hour);
  if (d == dates.end() || h == hours.end()) return nullptr;
  return &cell(static_cast<std::size_t>(d - dates.begin()), static_cast<std::size_t>(h - hours.begin()));
}

double HeatmapGrid::total_expected() const {
  double s = 0.0;
  for (const auto& c : cells) s += c.expected_misses;
  return s;
}

int HeatmapGrid::total_scheduled() const {
  int s = 0;
  for (const auto& c : cells) s += c.n_scheduled;
  return s;
}

namespace {

HeatmapGrid grid_for(std::span<const ScoredAppointment> scored, WeekRange week, const HeatmapFilter& filter,
                     const ClinicHours& hours, const std::string& label) {
  HeatmapGrid grid;
  grid.provider_id = label;
  grid.dates = hours.clinic_days(week.first, week.last);
  if (grid.dates.empty()) {
    throw Error(ErrorCode::EmptyWeek, "no clinic days between " + format_date(week.first) + " and " +
                                          format_date(week.last));
  }
  for (int h = hours.open_hour; h < hours.close_hour; ++h) grid.hours.push_back(h);

  std::vector<std::vector<TooltipEntry>> buckets(grid.dates.size() * grid.hours.size());
  for (const auto& a : scored) {
    if (!filter.matches(a)) continue;
    const Date d = a.scheduled_at.local_date();
    if (d < week.first || d > week.last) continue;
    auto di = std::find(grid.dates.begin(), grid.dates.end(), d);
    const int h = a.scheduled_at.hour();
    if (di == grid.dates.end() || h < hours.open_hour || h >= hours.close_hour) {
      ++grid.unplaced;
      continue;
    }
    const auto idx = static_cast<std::size_t>(di - grid.dates.begin()) * grid.hours.size() +
                     static_cast<std::size_t>(h - hours.open_hour);
    buckets[idx].push_back({a.appointment_id, a.scheduled_at, a.probability});
  }
  grid.cells.reserve(buckets.size());
  for (std::size_t d = 0; d < grid.dates.size(); ++d) {
    for (std::size_t h = 0; h < grid.hours.size(); ++h) {
      grid.cells.push_back(summarize_block(HourBlock{grid.dates[d], grid.hours[h], label},
                                           std::move(buckets[d * grid.hours.size() + h])));
    }
  }
  return grid;
}

}  // namespace

HeatmapGrid build_heatmap(std::span<const ScoredAppointment> scored, WeekRange week, const HeatmapFilter& filter,
                          const ClinicHours& hours) {
  return grid_for(scored, week, filter, hours, filter.provider.value_or(std::string(kAllProviders)));
}

std::vector<HeatmapGrid> build_provider_heatmaps(std::span<const ScoredAppointment> scored, WeekRange week,
                                                 const HeatmapFilter& filter, const ClinicHours& hours) {
  std::set<std::string> providers;
  for (const auto& a : scored) {
    if (filter.matches(a)) providers.insert(a.provider_id);
  }
  std::vector<HeatmapGrid> grids;
  for (const auto& p : providers) {
    HeatmapFilter f = filter;
    f.provider = p;
    grids.push_back(grid_for(scored, week, f, hours, p));
  }
  return grids;
}

nlohmann::ordered_json block_json(const BlockSummary& c) {
  nlohmann::ordered_json cell;
  cell["date"] = format_date(c.block.date);
  cell["hour"] = c.block.start_hour;
  cell["provider_id"] = c.block.provider_id;
  cell["expected"] = c.expected_misses;
  cell["n_scheduled"] = c.n_scheduled;
  cell["color"] = to_string(c.color);
  cell["overbook"] = c.recommended_overbook;
  auto& appts = cell["appointments"] = nlohmann::ordered_json::array();
  for (const auto& a : c.appointments) {
    appts.push_back({{"appointment_id", a.appointment_id},
                     {"scheduled_at", format_timestamp(a.scheduled_at)},
                     {"probability", a.probability}});
  }
  return cell;
}

nlohmann::ordered_json heatmap_json(WeekRange week, std::span<const std::string> providers,
                                    std::span<const HeatmapGrid> grids) {
  auto dates = nlohmann::ordered_json::array();
  auto hours = nlohmann::ordered_json::array();
  if (!grids.empty()) {
    for (auto d : grids.front().dates) dates.push_back(format_date(d));
    for (auto h : grids.front().hours) hours.push_back(h);
  }
  auto cells = nlohmann::ordered_json::array();
  std::size_t unplaced = 0;
  for (const auto& g : grids) {
    for (const auto& c : g.cells) cells.push_back(block_json(c));
    unplaced += g.unplaced;
  }
  nlohmann::ordered_json j;
  j["week"] = format_date(week.first);
  j["dates"] = std::move(dates);
  j["hours"] = std::move(hours);
  j["providers"] = std::vector<std::string>(providers.begin(), providers.end());
  j["cells"] = std::move(cells);
  j["unplaced"] = unplaced;
  return j;
}

void write_scored_csv(std::ostream& out, std::span<const ScoredAppointment> scored) {
  write_csv_row(out, {"appointment_id", "provider_id", "provider_specialty", "site_id", "scheduled_at", "probability"});
  for (const auto& a : scored) {
    write_csv_row(out, {a.appointment_id, a.provider_id, a.provider_specialty, a.site_id,
                        format_timestamp(a.scheduled_at), format_double(a.probability)});
  }
}

std::vector<ScoredAppointment> read_scored_csv(std::istream& in) {
  CsvReader reader(in);
  auto header = reader.next();
  const CsvRow expected = {"appointment_id", "provider_id", "provider_specialty", "site_id", "scheduled_at", "probability"};
  if (!header) throw Error(ErrorCode::EmptyFile, "scored table has no header");
  if (*header != expected) throw Error(ErrorCode::SchemaMismatch, "scored table columns differ from the expected layout");
  std::vector<ScoredAppointment> out;
  std::size_t row_no = 0;
  while (auto row = reader.next()) {
    ++row_no;
    auto ts = row->size() == expected.size() ? parse_timestamp((*row)[4]) : std::nullopt;
    auto p = row->size() == expected.size() ? parse_double((*row)[5]) : std::nullopt;
    if (!ts || !p || !(*p >= 0.0 && *p <= 1.0)) {
      throw Error(ErrorCode::InvalidRecord, "scored row " + std::to_string(row_no) + " is malformed");
    }
    out.push_back({(*row)[0], (*row)[1], (*row)[2], (*row)[3], *ts, *p});
  }
  return out;
}

}  // namespace noshow
