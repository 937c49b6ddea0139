#include "noshow/datagen.hpp"

#include <boost/algorithm/string.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "noshow/ingest.hpp"

namespace noshow {

namespace {

constexpr std::array<std::string_view, 7> kWeekdayNames = {"mon", "tue", "wed", "thu", "fri", "sat", "sun"};

template <std::size_t N>
void read_coefs(const KeyValueConfig& cfg, const std::string& key, std::array<double, N>& dest) {
  auto v = cfg.get_doubles(key);
  if (!v) return;
  if (v->size() != N) {
    throw Error(ErrorCode::InfeasibleConfig,
                key + " needs " + std::to_string(N) + " values, got " + std::to_string(v->size()));
  }
  std::copy(v->begin(), v->end(), dest.begin());
}

std::vector<std::string> read_list(const std::string& text) {
  std::vector<std::string> out;
  boost::algorithm::split(out, text, boost::is_any_of(","));
  for (auto& s : out) boost::algorithm::trim(s);
  out.erase(std::remove(out.begin(), out.end(), std::string()), out.end());
  return out;
}

std::string padded(const std::string& prefix, std::size_t n, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, n);
  return prefix + buf;
}

}  // namespace

double inverse_logit(double x) noexcept { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) noexcept { return std::log(p / (1.0 - p)); }

GeneratorConfig GeneratorConfig::null_signal() {
  GeneratorConfig c;
  c.coef_lead_time = 0.0;
  c.coef_hour_of_day.fill(0.0);
  c.coef_day_of_week.fill(0.0);
  c.coef_season.fill(0.0);
  c.patient_propensity_sd = 0.0;
  return c;
}

GeneratorConfig GeneratorConfig::from_config(const KeyValueConfig& cfg) {
  GeneratorConfig c;
  static const std::vector<std::string> kKnown = {
      "n_providers",     "n_patients",   "horizon_days",   "slots_per_hour",        "open_hour",
      "close_hour",      "clinic_days",  "start_date",     "utc_offset",            "base_logit",
      "coef_lead_time",  "coef_hour_of_day", "coef_day_of_week", "coef_season",     "patient_propensity_sd",
      "target_marginal_rate", "lead_time_median_days", "lead_time_sigma", "max_lead_time_days",
      "specialties",     "sites",        "seed"};
  for (const auto& [key, value] : cfg.entries()) {
    if (std::find(kKnown.begin(), kKnown.end(), key) == kKnown.end()) {
      throw Error(ErrorCode::InfeasibleConfig, "unknown generator key " + key);
    }
  }
  c.n_providers = static_cast<int>(cfg.get_int("n_providers", c.n_providers));
  c.n_patients = static_cast<int>(cfg.get_int("n_patients", c.n_patients));
  c.horizon_days = static_cast<int>(cfg.get_int("horizon_days", c.horizon_days));
  c.slots_per_hour = static_cast<int>(cfg.get_int("slots_per_hour", c.slots_per_hour));
  c.open_hour = static_cast<int>(cfg.get_int("open_hour", c.open_hour));
  c.close_hour = static_cast<int>(cfg.get_int("close_hour", c.close_hour));
  if (auto v = cfg.get("clinic_days")) {
    c.clinic_weekdays.clear();
    for (const auto& name : read_list(boost::algorithm::to_lower_copy(*v))) {
      auto it = std::find(kWeekdayNames.begin(), kWeekdayNames.end(), name);
      if (it == kWeekdayNames.end()) throw Error(ErrorCode::InfeasibleConfig, "unknown weekday " + name);
      c.clinic_weekdays.push_back(static_cast<int>(it - kWeekdayNames.begin()));
    }
  }
  if (auto v = cfg.get("start_date")) {
    auto d = parse_date(*v);
    if (!d) throw Error(ErrorCode::InfeasibleConfig, "bad start_date " + *v);
    c.start_date = *d;
  }
  if (auto v = cfg.get("utc_offset")) {
    auto off = parse_utc_offset(*v);
    if (!off) throw Error(ErrorCode::InfeasibleConfig, "bad utc_offset " + *v);
    c.utc_offset_minutes = *off;
  }
  c.base_logit = cfg.get_double("base_logit", c.base_logit);
  c.coef_lead_time = cfg.get_double("coef_lead_time", c.coef_lead_time);
  read_coefs(cfg, "coef_hour_of_day", c.coef_hour_of_day);
  read_coefs(cfg, "coef_day_of_week", c.coef_day_of_week);
  read_coefs(cfg, "coef_season", c.coef_season);
  c.patient_propensity_sd = cfg.get_double("patient_propensity_sd", c.patient_propensity_sd);
  if (auto v = cfg.get("target_marginal_rate")) {
    if (boost::algorithm::iequals(*v, "none")) {
      c.target_marginal_rate.reset();
    } else {
      c.target_marginal_rate = cfg.get_double("target_marginal_rate", 0.25);
    }
  }
  c.lead_time_median_days = cfg.get_double("lead_time_median_days", c.lead_time_median_days);
  c.lead_time_sigma = cfg.get_double("lead_time_sigma", c.lead_time_sigma);
  c.max_lead_time_days = cfg.get_double("max_lead_time_days", c.max_lead_time_days);
  if (auto v = cfg.get("specialties")) c.specialties = read_list(*v);
  if (auto v = cfg.get("sites")) c.sites = read_list(*v);
  c.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<long long>(c.seed)));
  c.validate();
  return c;
}

void GeneratorConfig::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::InfeasibleConfig, why); };
  if (n_providers < 1) fail("n_providers must be positive");
  if (n_patients < 1) fail("n_patients must be positive");
  if (horizon_days < 1) fail("horizon_days must be positive");
  if (slots_per_hour < 1 || 60 % slots_per_hour != 0) fail("slots_per_hour must divide 60");
  if (open_hour < 0 || close_hour > 24 || close_hour <= open_hour) fail("clinic hours need 0 <= open < close <= 24");
  if (clinic_weekdays.empty()) fail("no clinic weekdays");
  for (int d : clinic_weekdays) {
    if (d < 0 || d > 6) fail("weekday index out of range");
  }
  if (patient_propensity_sd < 0.0) fail("patient_propensity_sd must be nonnegative");
  if (target_marginal_rate && !(*target_marginal_rate >= 0.0 && *target_marginal_rate < 1.0)) {
    fail("target_marginal_rate must lie in [0, 1)");
  }
  if (!(lead_time_median_days > 0.0) || lead_time_sigma < 0.0 || max_lead_time_days < 0.0) {
    fail("lead-time distribution parameters out of range");
  }
  if (specialties.empty() || sites.empty()) fail("need at least one specialty and one site");
}

bool GeneratorConfig::is_clinic_day(Date date) const {
  int d = iso_weekday_index(date);
  return std::find(clinic_weekdays.begin(), clinic_weekdays.end(), d) != clinic_weekdays.end();
}

double PatientPool::intercept_of(const std::string& patient_id) const {
  auto it = index.find(patient_id);
  return it == index.end() ? 0.0 : intercepts[it->second];
}

PatientPool draw_patients(const GeneratorConfig& config) {
  Rng rng(derive_seed(config.seed, {1}));
  PatientPool pool;
  const int width = static_cast<int>(std::to_string(config.n_patients).size());
  for (int i = 0; i < config.n_patients; ++i) {
    pool.ids.push_back(padded("P", static_cast<std::size_t>(i + 1), width));
    pool.intercepts.push_back(config.patient_propensity_sd * rng.normal());
    pool.index.emplace(pool.ids.back(), static_cast<std::size_t>(i));
  }
  return pool;
}

double covariate_logit(const AppointmentRecord& r, const GeneratorConfig& c) noexcept {
  const Date d = r.scheduled_at.local_date();
  const double lead = std::max(0.0, days_between(r.booked_at, r.scheduled_at));
  return c.coef_lead_time * lead + c.coef_hour_of_day[static_cast<std::size_t>(r.scheduled_at.hour())] +
         c.coef_day_of_week[static_cast<std::size_t>(iso_weekday_index(d))] +
         c.coef_season[static_cast<std::size_t>(season_of(d))];
}

double true_probability(const AppointmentRecord& r, double patient_intercept, const GeneratorConfig& c) noexcept {
  const double p = inverse_logit(c.base_logit + patient_intercept + covariate_logit(r, c));
  if (p == 0.0 && std::isinf(c.base_logit)) return 0.0;
  constexpr double kEps = 1e-12;
  return std::clamp(p, kEps, 1.0 - kEps);
}

std::vector<AppointmentRecord> draw_schedule(const GeneratorConfig& c, const PatientPool& patients, Date first_day,
                                             int n_days, Rng& rng, const std::string& id_prefix) {
  std::vector<AppointmentRecord> out;
  const int slot = c.slot_minutes();
  const double log_median = std::log(c.lead_time_median_days);
  std::size_t counter = 0;
  const int width = 8;
  for (int day = 0; day < n_days; ++day) {
    const Date date = first_day + std::chrono::days{day};
    if (!c.is_clinic_day(date)) continue;
    for (int hour = c.open_hour; hour < c.close_hour; ++hour) {
      for (int s = 0; s < c.slots_per_hour; ++s) {
        for (int p = 0; p < c.n_providers; ++p) {
          AppointmentRecord r;
          r.appointment_id = padded(id_prefix, ++counter, width);
          r.provider_id = padded("D", static_cast<std::size_t>(p + 1), 3);
          r.provider_specialty = c.specialties[static_cast<std::size_t>(p) % c.specialties.size()];
          r.site_id = c.sites[static_cast<std::size_t>(p) % c.sites.size()];
          r.patient_id = patients.ids[rng.below(patients.size())];
          r.scheduled_at = Timestamp::from_local(date, hour, s * slot, c.utc_offset_minutes);
          double lead_days = std::exp(log_median + c.lead_time_sigma * rng.normal());
          lead_days = std::min(lead_days, c.max_lead_time_days);
          r.booked_at = r.scheduled_at.plus_minutes(-std::llround(lead_days * 24.0 * 60.0));
          r.duration_minutes = slot < kMinDurationMinutes ? kMinDurationMinutes : slot;
          r.outcome = Outcome::Pending;
          out.push_back(std::move(r));
        }
      }
    }
  }
  return out;
}

double solve_base_logit(std::span<const double> eta, double target) {
  if (target <= 0.0) return -std::numeric_limits<double>::infinity();
  if (eta.empty()) return logit(target);
  auto mean_p = [&](double b) {
    double s = 0.0;
    for (double e : eta) s += inverse_logit(b + e);
    return s / static_cast<double>(eta.size());
  };
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double m = mean_p(mid);
    if (std::abs(m - target) <= 1e-6) return mid;
    (m < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

SyntheticHistory generate_history(const GeneratorConfig& config) {
  config.validate();
  SyntheticHistory h;
  h.config = config;
  h.patients = draw_patients(config);
  Rng schedule_rng(derive_seed(config.seed, {2}));
  h.records = draw_schedule(config, h.patients, config.start_date, config.horizon_days, schedule_rng, "A");

  std::vector<double> eta(h.records.size());
  for (std::size_t i = 0; i < h.records.size(); ++i) {
    eta[i] = h.patients.intercept_of(h.records[i].patient_id) + covariate_logit(h.records[i], config);
  }
  if (config.target_marginal_rate) h.config.base_logit = solve_base_logit(eta, *config.target_marginal_rate);

  Rng outcome_rng(derive_seed(config.seed, {3}));
  h.true_probabilities.resize(h.records.size());
  for (std::size_t i = 0; i < h.records.size(); ++i) {
    auto& r = h.records[i];
    const double p = true_probability(r, h.patients.intercept_of(r.patient_id), h.config);
    h.true_probabilities[i] = p;
    r.outcome = outcome_rng.bernoulli(p) ? Outcome::Missed : Outcome::Attended;
  }
  return h;
}

void write_truth_csv(std::ostream& out, std::span<const AppointmentRecord> records,
                     std::span<const double> probabilities) {
  write_csv_row(out, {"appointment_id", "true_probability"});
  for (std::size_t i = 0; i < records.size(); ++i) {
    write_csv_row(out, {records[i].appointment_id, format_double(probabilities[i])});
  }
}

}  // namespace noshow
