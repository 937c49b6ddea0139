#include "noshow/schema.hpp"

#include <boost/algorithm/string/case_conv.hpp>
#include <boost/algorithm/string/trim.hpp>

#include <charconv>
#include <ostream>

#include "noshow/io.hpp"

namespace noshow {

std::string_view to_string(Outcome outcome) noexcept {
  switch (outcome) {
    case Outcome::Attended: return "attended";
    case Outcome::Missed: return "missed";
    case Outcome::Pending: return "pending";
  }
  return "pending";
}

std::optional<Outcome> parse_outcome(std::string_view text) {
  auto s = boost::algorithm::to_lower_copy(boost::algorithm::trim_copy(std::string(text)));
  if (s == "attended") return Outcome::Attended;
  if (s == "missed") return Outcome::Missed;
  if (s == "pending") return Outcome::Pending;
  return std::nullopt;
}

std::optional<OutcomeLabel> label_of(Outcome outcome) noexcept {
  switch (outcome) {
    case Outcome::Attended: return OutcomeLabel{false};
    case Outcome::Missed: return OutcomeLabel{true};
    case Outcome::Pending: return std::nullopt;
  }
  return std::nullopt;
}

HourBlock block_of(const Timestamp& scheduled_at, std::string provider_id) {
  return HourBlock{scheduled_at.local_date(), scheduled_at.hour(), std::move(provider_id)};
}

std::string ValidationResult::summary() const {
  std::string out;
  for (const auto& e : errors) {
    if (!out.empty()) out += "; ";
    out += std::string(to_string(e.kind)) + "(" + e.field + "): " + e.message;
  }
  return out;
}

ValidationResult validate_record(const FieldMap& raw) {
  ValidationResult result;
  auto& errors = result.errors;
  AppointmentRecord rec;

  auto text = [&](std::string_view field) -> std::optional<std::string> {
    auto it = raw.find(field);
    if (it == raw.end() || boost::algorithm::trim_copy(it->second).empty()) return std::nullopt;
    return boost::algorithm::trim_copy(it->second);
  };
  auto required = [&](std::string_view field, std::string& dest) {
    if (auto v = text(field)) {
      dest = *v;
    } else {
      errors.push_back({ErrorCode::MissingField, std::string(field), "required field is absent or empty"});
    }
  };

  required("appointment_id", rec.appointment_id);
  required("provider_id", rec.provider_id);
  required("provider_specialty", rec.provider_specialty);
  required("patient_id", rec.patient_id);
  required("site_id", rec.site_id);

  auto timestamp = [&](std::string_view field) -> std::optional<Timestamp> {
    auto v = text(field);
    if (!v) {
      errors.push_back({ErrorCode::MissingField, std::string(field), "required field is absent or empty"});
      return std::nullopt;
    }
    auto ts = parse_timestamp(*v);
    if (!ts) {
      errors.push_back({ErrorCode::MalformedTimestamp, std::string(field), "cannot parse '" + *v + "'"});
    }
    return ts;
  };
  auto scheduled = timestamp("scheduled_at");
  auto booked = timestamp("booked_at");
  if (scheduled) rec.scheduled_at = *scheduled;
  if (booked) rec.booked_at = *booked;
  if (scheduled && booked && *booked > *scheduled) {
    errors.push_back({ErrorCode::NegativeLeadTime, "booked_at",
                      "booked_at " + format_timestamp(*booked) + " is after scheduled_at " +
                          format_timestamp(*scheduled)});
  }

  if (auto v = text("duration_minutes")) {
    int minutes = 0;
    auto r = std::from_chars(v->data(), v->data() + v->size(), minutes);
    if (r.ec != std::errc{} || r.ptr != v->data() + v->size()) {
      errors.push_back({ErrorCode::InvalidRecord, "duration_minutes", "not an integer: '" + *v + "'"});
    } else if (minutes < kMinDurationMinutes || minutes > kMaxDurationMinutes) {
      errors.push_back({ErrorCode::InvalidRecord, "duration_minutes",
                        "must be within [5, 240], got " + std::to_string(minutes)});
    } else {
      rec.duration_minutes = minutes;
    }
  }

  if (auto v = text("outcome")) {
    if (auto o = parse_outcome(*v)) {
      rec.outcome = *o;
    } else {
      errors.push_back({ErrorCode::UnknownOutcome, "outcome", "unknown outcome '" + *v + "'"});
    }
  } else {
    errors.push_back({ErrorCode::MissingField, "outcome", "required field is absent or empty"});
  }

  if (errors.empty()) result.record = std::move(rec);
  return result;
}

FieldMap to_fields(const AppointmentRecord& r) {
  return FieldMap{{"appointment_id", r.appointment_id},
                  {"provider_id", r.provider_id},
                  {"provider_specialty", r.provider_specialty},
                  {"patient_id", r.patient_id},
                  {"site_id", r.site_id},
                  {"scheduled_at", format_timestamp(r.scheduled_at)},
                  {"booked_at", format_timestamp(r.booked_at)},
                  {"duration_minutes", std::to_string(r.duration_minutes)},
                  {"outcome", std::string(to_string(r.outcome))}};
}

void write_records_csv(std::ostream& out, std::span<const AppointmentRecord> records) {
  CsvRow header(kRecordFields.begin(), kRecordFields.end());
  write_csv_row(out, header);
  CsvRow row(kRecordFields.size());
  for (const auto& r : records) {
    row[0] = r.appointment_id;
    row[1] = r.provider_id;
    row[2] = r.provider_specialty;
    row[3] = r.patient_id;
    row[4] = r.site_id;
    row[5] = format_timestamp(r.scheduled_at);
    row[6] = format_timestamp(r.booked_at);
    row[7] = std::to_string(r.duration_minutes);
    row[8] = std::string(to_string(r.outcome));
    write_csv_row(out, row);
  }
}

bool scheduled_before(const AppointmentRecord& a, const AppointmentRecord& b) noexcept {
  if (a.scheduled_at.utc_minutes() != b.scheduled_at.utc_minutes()) {
    return a.scheduled_at.utc_minutes() < b.scheduled_at.utc_minutes();
  }
  return a.appointment_id < b.appointment_id;
}

}  // namespace noshow
