#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "noshow/datagen.hpp"
#include "noshow/ingest.hpp"
#include "noshow/model.hpp"

namespace noshow {

/// How many appointments to add to each provider hour-block.
struct Policy {
  enum class Kind { NoOverbook, FixedPerDay, BaselineRateFloor, ModelExpectationFloor, OracleFloor };

  Kind kind = Kind::NoOverbook;
  int per_day = 0;  // FixedPerDay only

  static Policy no_overbook() { return {Kind::NoOverbook, 0}; }
  static Policy fixed_per_day(int k) { return {Kind::FixedPerDay, k}; }
  static Policy baseline_rate_floor() { return {Kind::BaselineRateFloor, 0}; }
  static Policy model_expectation_floor() { return {Kind::ModelExpectationFloor, 0}; }
  static Policy oracle_floor() { return {Kind::OracleFloor, 0}; }

  /// "none", "fixed:K", "baseline", "model", "oracle" (or the full names).
  static Policy parse(std::string_view text);
  std::string name() const;

  friend bool operator==(const Policy&, const Policy&) = default;
};

struct MetricSummary {
  double mean = 0.0;
  double standard_error = 0.0;
};

struct SimulationReport {
  std::string policy;
  int replications = 0;
  std::uint64_t seed = 0;
  MetricSummary utilization_pct;         // attended / physical slots * 100
  MetricSummary avg_overbooked_per_day;  // clinic-wide additions per clinic day
  MetricSummary n_providers_overbooked;  // providers with any addition in the week
  MetricSummary collision_rate;          // blocks with arrivals > slots
  MetricSummary mean_excess_arrivals;    // mean over blocks of max(0, arrivals - slots)
  std::vector<double> utilization_by_replication;
  std::vector<std::uint64_t> replication_seeds;

  nlohmann::ordered_json to_json() const;
};

struct PolicyComparison {
  /// Sorted by mean utilization, highest first; ties keep input order.
  std::vector<SimulationReport> rows;

  nlohmann::ordered_json to_json() const;
  std::string to_text() const;
};

/// Paired t-test of mean(treatment - control) > 0.
struct PairedTest {
  double mean_difference = 0.0;
  double standard_error = 0.0;
  double t_statistic = 0.0;
  double p_value = 1.0;  // one-sided
  int degrees_of_freedom = 0;
};

PairedTest paired_test(std::span<const double> control, std::span<const double> treatment);

/// Monte-Carlo evaluation of overbooking policies on synthetic weeks drawn
/// from the year after a generated history. Every policy in a replication sees the same
/// schedule, the same attendance draws and the same add-on patients.
class PolicySimulator {
 public:
  /// Generates the history from `config` (config.seed).
  explicit PolicySimulator(const GeneratorConfig& config, std::shared_ptr<const FrozenForestModel> model = nullptr);
  PolicySimulator(SyntheticHistory history, std::shared_ptr<const FrozenForestModel> model);

  SimulationReport simulate(const Policy& policy, int n_replications, std::uint64_t seed) const;
  PolicyComparison compare(std::span<const Policy> policies, int n_replications, std::uint64_t seed) const;

  const SyntheticHistory& history() const noexcept { return history_; }
  /// First Monday after the history; replications draw one of the 52 weeks
  /// starting here.
  Date week_start() const noexcept { return week_start_; }
  double global_rate() const noexcept { return global_rate_; }

  /// Worker threads for replications; 0 = hardware concurrency.
  int threads = 0;

 private:
  std::vector<SimulationReport> run(std::span<const Policy> policies, int n_replications, std::uint64_t seed) const;

  SyntheticHistory history_;
  std::shared_ptr<const FrozenForestModel> model_;
  PatientHistory patient_history_;
  double global_rate_ = 0.0;
  Date week_start_;
};

SimulationReport simulate_policy(const GeneratorConfig& config, std::shared_ptr<const FrozenForestModel> model,
                                 const Policy& policy, int n_replications, std::uint64_t seed);

PolicyComparison compare_policies(const GeneratorConfig& config, std::shared_ptr<const FrozenForestModel> model,
                                  std::span<const Policy> policies, int n_replications, std::uint64_t seed);

}  // namespace noshow
