#include "noshow/ingest.hpp"

#include <boost/algorithm/string/case_conv.hpp>
#include <boost/algorithm/string/predicate.hpp>
#include <boost/algorithm/string/trim.hpp>

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

namespace noshow {

namespace {

constexpr std::string_view kCancelledAt = "cancelled_at";

bool is_timestamp_field(std::string_view f) {
  return f == "scheduled_at" || f == "booked_at" || f == kCancelledAt;
}

std::string lower_trim(std::string_view s) {
  return boost::algorithm::to_lower_copy(boost::algorithm::trim_copy(std::string(s)));
}

}  // namespace

// ---- ColumnMapping -----------------------------------------------------------

ColumnMapping ColumnMapping::canonical() {
  ColumnMapping m;
  for (auto f : kRecordFields) m.vendor_to_canonical.emplace(std::string(f), std::string(f));
  return m;
}

ColumnMapping ColumnMapping::from_config(const KeyValueConfig& cfg) {
  ColumnMapping m;
  for (const auto& [key, value] : cfg.entries()) {
    if (boost::algorithm::starts_with(key, "column.")) {
      m.vendor_to_canonical[key.substr(7)] = boost::algorithm::trim_copy(value);
    } else if (boost::algorithm::starts_with(key, "outcome.")) {
      auto o = parse_outcome(value);
      if (!o) throw Error(ErrorCode::InvalidArgument, "mapping: " + key + " targets unknown outcome " + value);
      m.outcome_values[lower_trim(key.substr(8))] = *o;
    } else if (key == "timestamp_format") {
      m.timestamp_format = value;
    } else if (key == "utc_offset") {
      auto off = parse_utc_offset(boost::algorithm::trim_copy(value));
      if (!off) throw Error(ErrorCode::InvalidArgument, "mapping: bad utc_offset " + value);
      m.utc_offset_minutes = *off;
    } else if (key == "cancel_window_hours") {
      m.cancel_window_hours = static_cast<int>(cfg.get_int(key, 24));
    } else {
      throw Error(ErrorCode::InvalidArgument, "mapping: unknown key " + key);
    }
  }
  m.validate();
  return m;
}

void ColumnMapping::validate() const {
  std::map<std::string, int> uses;
  for (const auto& [vendor, canonical] : vendor_to_canonical) {
    bool known = canonical == kCancelledAt ||
                 std::find(kRecordFields.begin(), kRecordFields.end(), canonical) != kRecordFields.end();
    if (!known) throw Error(ErrorCode::InvalidArgument, "mapping: '" + canonical + "' is not a schema field");
    ++uses[canonical];
  }
  for (const auto& [canonical, n] : uses) {
    if (n > 1) throw Error(ErrorCode::InvalidArgument, "mapping: '" + canonical + "' is mapped more than once");
  }
  for (auto f : kRecordFields) {
    if (f == "duration_minutes") continue;
    if (!uses.count(std::string(f))) {
      throw Error(ErrorCode::InvalidArgument, "mapping: '" + std::string(f) + "' is not mapped");
    }
  }
  if (cancel_window_hours < 0) throw Error(ErrorCode::InvalidArgument, "mapping: negative cancel window");
}

// ---- parse_export ------------------------------------------------------------

ExportParseResult parse_export(std::istream& in, const ColumnMapping& mapping) {
  mapping.validate();
  CsvReader reader(in);
  auto header = reader.next();
  if (!header) throw Error(ErrorCode::EmptyFile, "export has no header row");
  for (auto& h : *header) boost::algorithm::trim(h);
  if (!header->empty() && boost::algorithm::starts_with((*header)[0], "\xEF\xBB\xBF")) {
    (*header)[0].erase(0, 3);
  }

  struct Column {
    std::size_t index;
    std::string canonical;
  };
  std::vector<Column> columns;
  std::vector<std::string> missing;
  for (const auto& [vendor, canonical] : mapping.vendor_to_canonical) {
    auto it = std::find(header->begin(), header->end(), vendor);
    if (it == header->end()) {
      missing.push_back(vendor);
    } else {
      columns.push_back({static_cast<std::size_t>(it - header->begin()), canonical});
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw Error(ErrorCode::UnmappableHeader, "header lacks mapped column(s): " + list);
  }

  ExportParseResult result;
  std::size_t row_no = 0;
  while (auto row = reader.next()) {
    ++row_no;
    ++result.rows_read;
    if (row->size() != header->size()) {
      result.errors.push_back({row_no, "expected " + std::to_string(header->size()) + " fields, found " +
                                           std::to_string(row->size())});
      continue;
    }
    FieldMap fields;
    std::vector<std::string> problems;
    std::optional<Timestamp> cancelled_at;
    for (const auto& col : columns) {
      std::string value = boost::algorithm::trim_copy((*row)[col.index]);
      if (is_timestamp_field(col.canonical) && !value.empty()) {
        auto ts = parse_timestamp(value, mapping.timestamp_format, mapping.utc_offset_minutes);
        if (!ts) {
          problems.push_back("MalformedTimestamp(" + col.canonical + "): cannot parse '" + value + "'");
          continue;
        }
        if (col.canonical == kCancelledAt) {
          cancelled_at = ts;
          continue;
        }
        value = format_timestamp(*ts);
      } else if (col.canonical == "outcome" && !mapping.outcome_values.empty()) {
        auto it = mapping.outcome_values.find(lower_trim(value));
        if (it != mapping.outcome_values.end()) value = std::string(to_string(it->second));
      }
      if (col.canonical != kCancelledAt) fields[col.canonical] = std::move(value);
    }

    auto validated = validate_record(fields);
    for (const auto& e : validated.errors) {
      // Timestamp parse failures were already reported against the vendor text.
      bool dup = e.kind == ErrorCode::MissingField && is_timestamp_field(e.field) &&
                 std::any_of(problems.begin(), problems.end(),
                             [&](const std::string& p) { return p.find("(" + e.field + ")") != std::string::npos; });
      if (!dup) problems.push_back(std::string(to_string(e.kind)) + "(" + e.field + "): " + e.message);
    }
    if (!problems.empty() || !validated.record) {
      std::string reason;
      for (const auto& p : problems) reason += (reason.empty() ? "" : "; ") + p;
      result.errors.push_back({row_no, reason});
      continue;
    }

    AppointmentRecord rec = std::move(*validated.record);
    if (cancelled_at) {
      auto minutes_before = rec.scheduled_at.utc_minutes() - cancelled_at->utc_minutes();
      if (minutes_before > static_cast<std::int64_t>(mapping.cancel_window_hours) * 60) {
        ++result.dropped_cancellations;
        continue;
      }
      rec.outcome = Outcome::Missed;
    }
    result.records.push_back(std::move(rec));
  }
  return result;
}

ExportParseResult read_records_csv(std::istream& in) { return parse_export(in, ColumnMapping::canonical()); }

std::vector<AppointmentRecord> load_records_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  auto parsed = read_records_csv(in);
  if (!parsed.errors.empty()) {
    const auto& e = parsed.errors.front();
    throw Error(ErrorCode::InvalidRecord, path.string() + " row " + std::to_string(e.row) + ": " + e.reason +
                                              " (" + std::to_string(parsed.errors.size()) + " bad rows)");
  }
  return std::move(parsed.records);
}

// ---- rates -------------------------------------------------------------------

double no_show_rate(long missed, long scheduled) {
  if (scheduled <= 0) throw Error(ErrorCode::UndefinedRate, "no scheduled appointments");
  if (missed < 0 || missed > scheduled) {
    throw Error(ErrorCode::InvalidArgument, "missed must lie in [0, scheduled]");
  }
  return static_cast<double>(missed) / static_cast<double>(scheduled);
}

double smoothed_hist_rate(long missed, long scheduled, double global_rate, double pseudo_count) {
  if (!(pseudo_count > 0.0)) throw Error(ErrorCode::InvalidArgument, "pseudo_count must be positive");
  if (!(global_rate >= 0.0 && global_rate <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "global_rate must lie in [0, 1]");
  }
  if (missed < 0 || missed > scheduled) {
    throw Error(ErrorCode::InvalidArgument, "missed must lie in [0, scheduled]");
  }
  return (static_cast<double>(missed) + pseudo_count * global_rate) /
         (static_cast<double>(scheduled) + pseudo_count);
}

// ---- features ----------------------------------------------------------------

std::string_view to_string(Season season) noexcept {
  switch (season) {
    case Season::Winter: return "winter";
    case Season::Spring: return "spring";
    case Season::Summer: return "summer";
    case Season::Fall: return "fall";
  }
  return "winter";
}

std::optional<Season> parse_season(std::string_view text) {
  for (auto s : {Season::Winter, Season::Spring, Season::Summer, Season::Fall}) {
    if (text == to_string(s)) return s;
  }
  return std::nullopt;
}

Season season_of(Date date) noexcept {
  unsigned m = static_cast<unsigned>(std::chrono::year_month_day{date}.month());
  return static_cast<Season>((m % 12) / 3);
}

PatientCounts PatientHistory::counts_before(const std::string& patient_id, Date date) const {
  auto it = states_.find(patient_id);
  if (it == states_.end()) return {};
  const State& s = it->second;
  PatientCounts c = s.settled;
  for (const auto& e : s.recent) {
    if (e.date < date) {
      ++c.scheduled;
      if (e.missed) ++c.missed;
    }
  }
  return c;
}

void PatientHistory::add(const std::string& patient_id, Date date, OutcomeLabel label) {
  State& s = states_[patient_id];
  if (!s.recent.empty() && date > s.recent.front().date) {
    for (const auto& e : s.recent) {
      ++s.settled.scheduled;
      if (e.missed) ++s.settled.missed;
    }
    s.recent.clear();
  }
  if (!s.recent.empty() && date < s.recent.front().date) {
    // Out-of-order local date (mixed offsets): already in the past.
    ++s.settled.scheduled;
    if (label.missed) ++s.settled.missed;
    return;
  }
  s.recent.push_back({date, label.missed});
}

FeatureVector make_features(const AppointmentRecord& r, PatientCounts prior, double global_rate,
                            double pseudo_count) {
  FeatureVector f;
  f.appointment_id = r.appointment_id;
  f.lead_time_days = std::max(0.0, days_between(r.booked_at, r.scheduled_at));
  f.hour_of_day = r.scheduled_at.hour();
  const Date d = r.scheduled_at.local_date();
  f.day_of_week = iso_weekday_index(d);
  f.season = season_of(d);
  f.provider_specialty = r.provider_specialty;
  f.site_id = r.site_id;
  f.patient_hist_rate = smoothed_hist_rate(prior.missed, prior.scheduled, global_rate, pseudo_count);
  f.patient_prior_appointments = static_cast<int>(prior.scheduled);
  f.label = label_of(r.outcome);
  return f;
}

double global_no_show_rate(std::span<const AppointmentRecord> records) {
  long missed = 0, labeled = 0;
  for (const auto& r : records) {
    if (auto l = label_of(r.outcome)) {
      ++labeled;
      if (l->missed) ++missed;
    }
  }
  return no_show_rate(missed, labeled);
}

std::vector<FeatureVector> engineer_features(std::span<const AppointmentRecord> records, double global_rate,
                                             double pseudo_count) {
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (scheduled_before(records[i], records[i - 1])) {
      throw Error(ErrorCode::UnsortedInput, "record " + records[i].appointment_id + " precedes " +
                                                records[i - 1].appointment_id);
    }
  }
  PatientHistory history;
  std::vector<FeatureVector> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const Date d = r.scheduled_at.local_date();
    out.push_back(make_features(r, history.counts_before(r.patient_id, d), global_rate, pseudo_count));
    if (auto l = label_of(r.outcome)) history.add(r.patient_id, d, *l);
  }
  return out;
}

void write_features_csv(std::ostream& out, std::span<const FeatureVector> features) {
  write_csv_row(out, CsvRow(kFeatureColumns.begin(), kFeatureColumns.end()));
  CsvRow row(kFeatureColumns.size());
  for (const auto& f : features) {
    row[0] = f.appointment_id;
    row[1] = format_double(f.lead_time_days);
    row[2] = std::to_string(f.hour_of_day);
    row[3] = std::to_string(f.day_of_week);
    row[4] = std::string(to_string(f.season));
    row[5] = f.provider_specialty;
    row[6] = f.site_id;
    row[7] = format_double(f.patient_hist_rate);
    row[8] = std::to_string(f.patient_prior_appointments);
    row[9] = f.label ? std::to_string(f.label->value()) : std::string();
    write_csv_row(out, row);
  }
}

std::vector<FeatureVector> read_features_csv(std::istream& in) {
  CsvReader reader(in);
  auto header = reader.next();
  if (!header) throw Error(ErrorCode::EmptyFile, "feature table has no header");
  if (!std::equal(header->begin(), header->end(), kFeatureColumns.begin(), kFeatureColumns.end())) {
    throw Error(ErrorCode::SchemaMismatch, "feature table columns differ from the expected layout");
  }
  std::vector<FeatureVector> out;
  std::size_t row_no = 0;
  while (auto row = reader.next()) {
    ++row_no;
    auto bad = [&](const std::string& what) {
      return Error(ErrorCode::InvalidRecord, "feature row " + std::to_string(row_no) + ": " + what);
    };
    if (row->size() != kFeatureColumns.size()) throw bad("wrong field count");
    const auto& v = *row;
    FeatureVector f;
    f.appointment_id = v[0];
    auto lead = parse_double(v[1]);
    auto hour = parse_int(v[2]);
    auto dow = parse_int(v[3]);
    auto season = parse_season(v[4]);
    auto rate = parse_double(v[7]);
    auto prior = parse_int(v[8]);
    if (!lead || !hour || !dow || !season || !rate || !prior) throw bad("unparseable value");
    f.lead_time_days = *lead;
    f.hour_of_day = static_cast<int>(*hour);
    f.day_of_week = static_cast<int>(*dow);
    f.season = *season;
    f.provider_specialty = v[5];
    f.site_id = v[6];
    f.patient_hist_rate = *rate;
    f.patient_prior_appointments = static_cast<int>(*prior);
    if (v[9] == "1") {
      f.label = OutcomeLabel{true};
    } else if (v[9] == "0") {
      f.label = OutcomeLabel{false};
    } else if (!v[9].empty()) {
      throw bad("label must be 0, 1 or empty");
    }
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace noshow
