#include "noshow/simulate.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

#include "noshow/error.hpp"
#include "noshow/io.hpp"

namespace noshow {

Policy Policy::parse(std::string_view text) {
  std::string t(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (t == "none" || t == "no_overbook") return no_overbook();
  if (t == "baseline" || t == "baseline_rate_floor") return baseline_rate_floor();
  if (t == "model" || t == "model_expectation_floor") return model_expectation_floor();
  if (t == "oracle" || t == "oracle_floor") return oracle_floor();
  for (std::string_view prefix : {"fixed:", "fixed_per_day:"}) {
    if (t.starts_with(prefix)) {
      auto k = parse_int(std::string_view(t).substr(prefix.size()));
      if (k && *k >= 0) return fixed_per_day(static_cast<int>(*k));
    }
  }
  throw Error(ErrorCode::InvalidArgument, "unknown policy '" + std::string(text) + "'");
}

std::string Policy::name() const {
  switch (kind) {
    case Kind::NoOverbook: return "no_overbook";
    case Kind::FixedPerDay: return "fixed_per_day:" + std::to_string(per_day);
    case Kind::BaselineRateFloor: return "baseline_rate_floor";
    case Kind::ModelExpectationFloor: return "model_expectation_floor";
    case Kind::OracleFloor: return "oracle_floor";
  }
  return "no_overbook";
}

namespace {

// Simulated weeks are drawn uniformly from the year after the history so
// that seasonal effects average out as they did in the history.
constexpr std::uint64_t kWeeksAhead = 52;

nlohmann::ordered_json summary_json(const MetricSummary& m) {
  return {{"mean", m.mean}, {"standard_error", m.standard_error}};
}

MetricSummary summarize(const std::vector<double>& xs) {
  MetricSummary s;
  if (xs.empty()) return s;
  const double n = static_cast<double>(xs.size());
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / n;
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.standard_error = std::sqrt(ss / (n - 1.0) / n);
  }
  return s;
}

struct Block {
  int provider = 0;
  int day = 0;  // offset from the simulated week start
  int hour = 0;
  std::vector<std::size_t> appointments;
};

struct AddOn {
  double probability;
  double uniform;
};

// Everything a replication shares across policies.
struct Replication {
  std::uint64_t seed = 0;
  Date week;  // Monday of the simulated week
  std::vector<double> true_p;
  std::vector<double> hist_rate;
  std::vector<double> model_p;
  std::vector<double> uniforms;
  std::vector<Block> blocks;
  int n_clinic_days = 0;
};

struct RepMetrics {
  double utilization = 0.0;
  double overbooked_per_day = 0.0;
  double providers_overbooked = 0.0;
  double collision_rate = 0.0;
  double mean_excess = 0.0;
};

}  // namespace

PolicySimulator::PolicySimulator(const GeneratorConfig& config, std::shared_ptr<const FrozenForestModel> model)
    : PolicySimulator(generate_history(config), std::move(model)) {}

PolicySimulator::PolicySimulator(SyntheticHistory history, std::shared_ptr<const FrozenForestModel> model)
    : history_(std::move(history)), model_(std::move(model)) {
  long missed = 0;
  for (const auto& r : history_.records) {
    if (auto l = label_of(r.outcome)) {
      patient_history_.add(r.patient_id, r.scheduled_at.local_date(), *l);
      missed += l->missed ? 1 : 0;
    }
  }
  global_rate_ = history_.records.empty() ? 0.0 : static_cast<double>(missed) / static_cast<double>(history_.records.size());
  const Date after = history_.config.start_date + std::chrono::days{history_.config.horizon_days};
  week_start_ = noshow::week_start(after);
  if (week_start_ < after) week_start_ += std::chrono::days{7};
}

std::vector<SimulationReport> PolicySimulator::run(std::span<const Policy> policies, int n_replications,
                                                   std::uint64_t seed) const {
  if (n_replications < 1) throw Error(ErrorCode::InvalidArgument, "replications must be at least 1");
  const bool need_model = std::any_of(policies.begin(), policies.end(), [](const Policy& p) {
    return p.kind == Policy::Kind::ModelExpectationFloor;
  });
  if (need_model) {
    if (!model_) throw Error(ErrorCode::IncompatibleModelSchema, "model policy requested without a model");
    const auto& enc = model_->encoder();
    auto overlaps = [](const std::vector<std::string>& vocab, const std::vector<std::string>& wanted) {
      return std::any_of(wanted.begin(), wanted.end(),
                         [&](const auto& w) { return std::find(vocab.begin(), vocab.end(), w) != vocab.end(); });
    };
    if ((enc.feature_set().specialty && !overlaps(enc.specialties(), history_.config.specialties)) ||
        (enc.feature_set().site && !overlaps(enc.sites(), history_.config.sites))) {
      throw Error(ErrorCode::IncompatibleModelSchema, "model vocabulary does not cover the simulated clinic");
    }
  }
  for (const auto& p : policies) {
    if (p.kind == Policy::Kind::FixedPerDay && p.per_day < 0) {
      throw Error(ErrorCode::InvalidArgument, "fixed_per_day needs a nonnegative count");
    }
  }

  const GeneratorConfig& cfg = history_.config;
  const auto& pool = history_.patients;

  auto build = [&](int r) {
    Replication rep;
    rep.seed = derive_seed(seed, {static_cast<std::uint64_t>(r)});
    Rng schedule_rng(derive_seed(rep.seed, {1}));
    rep.week = week_start_ + std::chrono::days{7 * static_cast<int>(schedule_rng.below(kWeeksAhead))};
    auto week = draw_schedule(cfg, pool, rep.week, 7, schedule_rng, "S");
    Rng attend_rng(derive_seed(rep.seed, {2}));
    std::vector<FeatureVector> features;
    features.reserve(week.size());
    std::map<std::tuple<int, int, int>, std::size_t> block_of;
    std::vector<bool> day_seen(7, false);
    for (std::size_t i = 0; i < week.size(); ++i) {
      const auto& a = week[i];
      rep.true_p.push_back(true_probability(a, pool.intercept_of(a.patient_id), cfg));
      rep.uniforms.push_back(attend_rng.uniform());
      const Date d = a.scheduled_at.local_date();
      features.push_back(make_features(a, patient_history_.counts_before(a.patient_id, d), global_rate_));
      rep.hist_rate.push_back(features.back().patient_hist_rate);
      const int provider = std::stoi(a.provider_id.substr(1)) - 1;
      const int day = static_cast<int>((d - rep.week).count());
      day_seen[static_cast<std::size_t>(day)] = true;
      auto [it, fresh] = block_of.try_emplace({provider, day, a.scheduled_at.hour()}, rep.blocks.size());
      if (fresh) rep.blocks.push_back({provider, day, a.scheduled_at.hour(), {}});
      rep.blocks[it->second].appointments.push_back(i);
    }
    rep.n_clinic_days = static_cast<int>(std::count(day_seen.begin(), day_seen.end(), true));
    if (need_model) rep.model_p = predict_proba(*model_, features);
    return rep;
  };

  // Add-on k of a block is fixed by (replication, block, k), so every policy
  // that adds it sees the same patient and the same attendance draw.
  auto add_on = [&](const Replication& rep, const Block& b, int k) {
    Rng rng(derive_seed(rep.seed, {3, static_cast<std::uint64_t>(b.provider), static_cast<std::uint64_t>(b.day),
                                   static_cast<std::uint64_t>(b.hour), static_cast<std::uint64_t>(k)}));
    AppointmentRecord a;
    a.patient_id = pool.ids[rng.below(pool.size())];
    a.scheduled_at = Timestamp::from_local(rep.week + std::chrono::days{b.day}, b.hour, 0, cfg.utc_offset_minutes);
    double lead = std::exp(std::log(cfg.lead_time_median_days) + cfg.lead_time_sigma * rng.normal());
    lead = std::min(lead, cfg.max_lead_time_days);
    a.booked_at = a.scheduled_at.plus_minutes(-std::llround(lead * 24.0 * 60.0));
    const double p = true_probability(a, pool.intercept_of(a.patient_id), cfg);
    return AddOn{p, rng.uniform()};
  };

  auto evaluate = [&](const Replication& rep, const Policy& policy) {
    std::vector<int> added(rep.blocks.size(), 0);
    auto floor_sum = [&](const std::vector<double>& v, const Block& b) {
      double s = 0.0;
      for (auto i : b.appointments) s += v[i];
      return static_cast<int>(std::floor(s));
    };
    switch (policy.kind) {
      case Policy::Kind::NoOverbook: break;
      case Policy::Kind::FixedPerDay: {
        std::map<std::pair<int, int>, std::vector<std::size_t>> by_day;
        for (std::size_t i = 0; i < rep.blocks.size(); ++i) by_day[{rep.blocks[i].provider, rep.blocks[i].day}].push_back(i);
        for (auto& [key, idx] : by_day) {
          std::sort(idx.begin(), idx.end(), [&](auto x, auto y) { return rep.blocks[x].hour < rep.blocks[y].hour; });
          const int h = static_cast<int>(idx.size());
          for (int j = 0; j < h; ++j) added[idx[static_cast<std::size_t>(j)]] = policy.per_day / h + (j < policy.per_day % h ? 1 : 0);
        }
        break;
      }
      case Policy::Kind::BaselineRateFloor:
        for (std::size_t i = 0; i < rep.blocks.size(); ++i) added[i] = floor_sum(rep.hist_rate, rep.blocks[i]);
        break;
      case Policy::Kind::ModelExpectationFloor:
        for (std::size_t i = 0; i < rep.blocks.size(); ++i) added[i] = floor_sum(rep.model_p, rep.blocks[i]);
        break;
      case Policy::Kind::OracleFloor:
        for (std::size_t i = 0; i < rep.blocks.size(); ++i) added[i] = floor_sum(rep.true_p, rep.blocks[i]);
        break;
    }

    const int slots = cfg.slots_per_hour;
    long arrivals_total = 0, added_total = 0, collisions = 0, excess = 0;
    std::vector<bool> provider_overbooked(static_cast<std::size_t>(cfg.n_providers), false);
    for (std::size_t i = 0; i < rep.blocks.size(); ++i) {
      const auto& b = rep.blocks[i];
      long arrivals = 0;
      for (auto a : b.appointments) arrivals += rep.uniforms[a] >= rep.true_p[a] ? 1 : 0;
      for (int k = 0; k < added[i]; ++k) {
        const auto extra = add_on(rep, b, k);
        arrivals += extra.uniform >= extra.probability ? 1 : 0;
      }
      if (added[i] > 0) provider_overbooked[static_cast<std::size_t>(b.provider)] = true;
      arrivals_total += arrivals;
      added_total += added[i];
      if (arrivals > slots) {
        ++collisions;
        excess += arrivals - slots;
      }
    }
    const double n_blocks = static_cast<double>(rep.blocks.size());
    RepMetrics m;
    m.utilization = 100.0 * static_cast<double>(arrivals_total) / (n_blocks * slots);
    m.overbooked_per_day = rep.n_clinic_days ? static_cast<double>(added_total) / rep.n_clinic_days : 0.0;
    m.providers_overbooked = static_cast<double>(std::count(provider_overbooked.begin(), provider_overbooked.end(), true));
    m.collision_rate = static_cast<double>(collisions) / n_blocks;
    m.mean_excess = static_cast<double>(excess) / n_blocks;
    return m;
  };

  const auto n_reps = static_cast<std::size_t>(n_replications);
  std::vector<std::vector<RepMetrics>> results(n_reps);
  std::vector<std::uint64_t> seeds(n_reps);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r; (r = next.fetch_add(1)) < n_reps;) {
      const auto rep = build(static_cast<int>(r));
      seeds[r] = rep.seed;
      for (const auto& p : policies) results[r].push_back(evaluate(rep, p));
    }
  };
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const auto n_threads = std::min<std::size_t>(n_reps, threads > 0 ? static_cast<std::size_t>(threads) : hw);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool_threads;
    for (std::size_t t = 0; t < n_threads; ++t) pool_threads.emplace_back(worker);
  }

  std::vector<SimulationReport> reports;
  for (std::size_t p = 0; p < policies.size(); ++p) {
    SimulationReport rep;
    rep.policy = policies[p].name();
    rep.replications = n_replications;
    rep.seed = seed;
    rep.replication_seeds = seeds;
    std::vector<double> u, ob, np, cr, ex;
    for (std::size_t r = 0; r < n_reps; ++r) {
      const auto& m = results[r][p];
      u.push_back(m.utilization);
      ob.push_back(m.overbooked_per_day);
      np.push_back(m.providers_overbooked);
      cr.push_back(m.collision_rate);
      ex.push_back(m.mean_excess);
    }
    rep.utilization_pct = summarize(u);
    rep.avg_overbooked_per_day = summarize(ob);
    rep.n_providers_overbooked = summarize(np);
    rep.collision_rate = summarize(cr);
    rep.mean_excess_arrivals = summarize(ex);
    rep.utilization_by_replication = std::move(u);
    reports.push_back(std::move(rep));
  }
  return reports;
}

SimulationReport PolicySimulator::simulate(const Policy& policy, int n_replications, std::uint64_t seed) const {
  return run(std::span(&policy, 1), n_replications, seed).front();
}

PolicyComparison PolicySimulator::compare(std::span<const Policy> policies, int n_replications,
                                          std::uint64_t seed) const {
  PolicyComparison out;
  out.rows = run(policies, n_replications, seed);
  std::stable_sort(out.rows.begin(), out.rows.end(), [](const SimulationReport& a, const SimulationReport& b) {
    return a.utilization_pct.mean > b.utilization_pct.mean;
  });
  return out;
}

nlohmann::ordered_json SimulationReport::to_json() const {
  nlohmann::ordered_json j;
  j["policy"] = policy;
  j["replications"] = replications;
  j["seed"] = seed;
  j["utilization_pct"] = summary_json(utilization_pct);
  j["avg_overbooked_per_day"] = summary_json(avg_overbooked_per_day);
  j["n_providers_overbooked"] = summary_json(n_providers_overbooked);
  j["collision_rate"] = summary_json(collision_rate);
  j["mean_excess_arrivals"] = summary_json(mean_excess_arrivals);
  j["replication_seeds"] = replication_seeds;
  return j;
}

nlohmann::ordered_json PolicyComparison::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& r : rows) j.push_back(r.to_json());
  return j;
}

std::string PolicyComparison::to_text() const {
  std::ostringstream out;
  out << std::left << std::setw(26) << "policy" << std::right << std::setw(18) << "utilization_%" << std::setw(18)
      << "overbooked/day" << std::setw(16) << "providers" << std::setw(18) << "collision_rate" << std::setw(18)
      << "mean_excess" << '\n';
  auto cell = [&](const MetricSummary& m, int width, int digits) {
    std::ostringstream c;
    c << std::fixed << std::setprecision(digits) << m.mean << " +/- " << m.standard_error;
    out << std::setw(width) << c.str();
  };
  for (const auto& r : rows) {
    out << std::left << std::setw(26) << r.policy << std::right;
    cell(r.utilization_pct, 18, 2);
    cell(r.avg_overbooked_per_day, 18, 2);
    cell(r.n_providers_overbooked, 16, 1);
    cell(r.collision_rate, 18, 4);
    cell(r.mean_excess_arrivals, 18, 4);
    out << '\n';
  }
  return out.str();
}

PairedTest paired_test(std::span<const double> control, std::span<const double> treatment) {
  if (control.size() != treatment.size() || control.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "paired test needs two equal-length samples of size >= 2");
  }
  std::vector<double> diff(control.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = treatment[i] - control[i];
  const auto s = summarize(diff);
  PairedTest t;
  t.mean_difference = s.mean;
  t.standard_error = s.standard_error;
  t.degrees_of_freedom = static_cast<int>(diff.size()) - 1;
  if (s.standard_error == 0.0) {
    t.t_statistic = s.mean > 0 ? INFINITY : (s.mean < 0 ? -INFINITY : 0.0);
    t.p_value = s.mean > 0 ? 0.0 : 1.0;
    return t;
  }
  t.t_statistic = s.mean / s.standard_error;
  boost::math::students_t dist(t.degrees_of_freedom);
  t.p_value = boost::math::cdf(boost::math::complement(dist, t.t_statistic));
  return t;
}

SimulationReport simulate_policy(const GeneratorConfig& config, std::shared_ptr<const FrozenForestModel> model,
                                 const Policy& policy, int n_replications, std::uint64_t seed) {
  return PolicySimulator(config, std::move(model)).simulate(policy, n_replications, seed);
}

PolicyComparison compare_policies(const GeneratorConfig& config, std::shared_ptr<const FrozenForestModel> model,
                                  std::span<const Policy> policies, int n_replications, std::uint64_t seed) {
  return PolicySimulator(config, std::move(model)).compare(policies, n_replications, seed);
}

}  // namespace noshow
