#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "noshow/io.hpp"
#include "noshow/random.hpp"
#include "noshow/schema.hpp"

namespace noshow {

/// Synthetic clinic with a logistic no-show process:
///
///   logit p = base_logit + patient_intercept + coef_lead_time * lead_days
///           + coef_hour_of_day[hour] + coef_day_of_week[dow] + coef_season[season]
///
/// Member defaults are the shipped synthetic coefficients (informative
/// signal, 25% marginal). They are illustrative, not estimates from any clinic.
struct GeneratorConfig {
  int n_providers = 20;
  int n_patients = 4000;
  int horizon_days = 730;
  int slots_per_hour = 4;
  int open_hour = 8;
  int close_hour = 16;
  std::vector<int> clinic_weekdays = {0, 1, 2, 3, 4};  // 0 = Monday
  Date start_date = Date{std::chrono::year{2021} / 1 / 4};
  int utc_offset_minutes = -300;

  double base_logit = -1.0986122886681098;  // logit(0.25)
  double coef_lead_time = 0.03;
  std::array<double, 24> coef_hour_of_day = {0, 0,    0,     0,     0,     0,   0,    0,   -0.5, -0.35, -0.2, -0.05,
                                             0.1, 0.25, 0.4, 0.6, 0, 0, 0, 0, 0, 0, 0, 0};
  std::array<double, 7> coef_day_of_week = {0.25, 0.0, -0.1, 0.0, 0.3, 0.0, 0.0};
  std::array<double, 4> coef_season = {0.3, -0.1, 0.1, -0.2};
  double patient_propensity_sd = 1.0;
  /// When set, base_logit is re-solved so the mean true probability over the
  /// generated schedule equals this value. 0 means nobody ever misses.
  std::optional<double> target_marginal_rate = 0.25;

  double lead_time_median_days = 7.0;
  double lead_time_sigma = 1.0;  // log-normal shape
  double max_lead_time_days = 180.0;

  std::vector<std::string> specialties = {"family_medicine", "internal_medicine", "pediatrics", "ob_gyn"};
  std::vector<std::string> sites = {"main", "north"};

  std::uint64_t seed = 1;

  /// Zero coefficients and no patient spread: outcomes carry no signal.
  static GeneratorConfig null_signal();
  static GeneratorConfig from_config(const KeyValueConfig& cfg);
  /// Throws Error(InfeasibleConfig).
  void validate() const;
  int slot_minutes() const { return 60 / slots_per_hour; }
  bool is_clinic_day(Date date) const;
};

double inverse_logit(double x) noexcept;
double logit(double p) noexcept;

/// Per-patient random intercepts on the logit scale.
struct PatientPool {
  std::vector<std::string> ids;
  std::vector<double> intercepts;
  std::unordered_map<std::string, std::size_t> index;

  double intercept_of(const std::string& patient_id) const;
  std::size_t size() const { return ids.size(); }
};

PatientPool draw_patients(const GeneratorConfig& config);

/// base_logit excluded; used for re-solving the intercept.
double covariate_logit(const AppointmentRecord& record, const GeneratorConfig& config) noexcept;

/// Inverse-logit of the full linear predictor.
double true_probability(const AppointmentRecord& record, double patient_intercept,
                        const GeneratorConfig& config) noexcept;

/// Fills every clinic-day slot in [first_day, first_day + n_days) with a
/// pending appointment. Ids are `id_prefix` + running counter.
std::vector<AppointmentRecord> draw_schedule(const GeneratorConfig& config, const PatientPool& patients,
                                             Date first_day, int n_days, Rng& rng,
                                             const std::string& id_prefix);

/// base_logit such that the mean of inverse_logit(b + eta_i) equals `target`
/// (bisection, |error| <= 1e-6).
double solve_base_logit(std::span<const double> covariate_logits, double target);

struct SyntheticHistory {
  GeneratorConfig config;  // base_logit resolved
  PatientPool patients;
  std::vector<AppointmentRecord> records;  // sorted, outcomes drawn
  std::vector<double> true_probabilities;  // aligned with records
};

/// Deterministic in config.seed. Throws InfeasibleConfig.
SyntheticHistory generate_history(const GeneratorConfig& config);

void write_truth_csv(std::ostream& out, std::span<const AppointmentRecord> records,
                     std::span<const double> probabilities);

}  // namespace noshow
