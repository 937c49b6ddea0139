// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <memory>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include "noshow/aggregate.hpp"
#include "noshow/datagen.hpp"
#include "noshow/ingest.hpp"
#include "noshow/metrics.hpp"
#include "noshow/model.hpp"
#include "noshow/pipeline.hpp"
#include "noshow/service.hpp"
#include "noshow/simulate.hpp"
#include "../support.hpp"
#include "../two_branch.hpp"

using namespace noshow;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(const std::string& name, double limit_seconds, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("threw: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs < limit_seconds;
  if (!in_time) o.detail += " [over time limit]";
  const bool pass = o.pass && in_time;
  failures += pass ? 0 : 1;
  std::printf("%s  %-26s %s  (%.2f s, limit %.0f s)\n", pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs,
              limit_seconds);
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Desk-scale clinic: four providers over two years, about 67k appointments.
GeneratorConfig desk_config(std::optional<double> target = 0.25) {
  GeneratorConfig c;
  c.n_providers = 4;
  c.n_patients = 2000;
  c.horizon_days = 730;
  c.seed = 11;
  c.target_marginal_rate = target;
  return c;
}

// Calibrated forest used wherever predictions are read as probabilities.
ForestHyperparams calibrated_hyperparams() {
  ForestHyperparams hp;
  hp.n_trees = 200;
  hp.min_leaf_size = 100;
  hp.features_per_split = 14;
  hp.seed = 1;
  return hp;
}

const SyntheticHistory& desk_history() {
  static const SyntheticHistory h = generate_history(desk_config());
  return h;
}

const TrainedModel& calibrated_model() {
  static const TrainedModel t = train_from_records(desk_history().records, calibrated_hyperparams());
  return t;
}

double brute_force_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1;
      num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return num / pairs;
}

BlockColor oracle_color(double v) { return v < 1.0 ? BlockColor::Yellow : (v <= 2.0 ? BlockColor::Orange : BlockColor::Red); }

bool bit_identical(const FeatureVector& a, const FeatureVector& b) {
  auto bits = [](double d) { return std::bit_cast<std::uint64_t>(d); };
  return a.appointment_id == b.appointment_id && bits(a.lead_time_days) == bits(b.lead_time_days) &&
         a.hour_of_day == b.hour_of_day && a.day_of_week == b.day_of_week && a.season == b.season &&
         a.provider_specialty == b.provider_specialty && a.site_id == b.site_id &&
         bits(a.patient_hist_rate) == bits(b.patient_hist_rate) &&
         a.patient_prior_appointments == b.patient_prior_appointments && a.label == b.label;
}

Outcome worked_example() {
  std::vector<ScoredAppointment> s;
  for (int m : {0, 15, 30, 45}) {
    s.push_back({"T" + std::to_string(m), "D001", "family_medicine", "main", test::at(2022, 5, 3, 13, m), 0.25});
  }
  const auto g = build_heatmap(s, WeekRange::containing(test::ymd(2022, 5, 3)), {}, ClinicHours{});
  int non_empty = 0;
  for (const auto& c : g.cells) non_empty += c.n_scheduled > 0;
  const auto* c = g.find(test::ymd(2022, 5, 3), 13);
  const bool ok = c && non_empty == 1 && c->expected_misses == 1.0 && c->color == BlockColor::Orange &&
                  c->recommended_overbook == 1;
  return {ok, c ? fmt("expected=%.17g color=%s overbook=%d", c->expected_misses, std::string(to_string(c->color)).c_str(),
                      c->recommended_overbook)
                : "cell missing"};
}

Outcome threshold_conformance() {
  int mismatches = 0;
  for (int i = 0; i < 10000; ++i) {
    const double v = 4.0 * i / 9999.0;
    mismatches += color_code(v) != oracle_color(v);
  }
  for (double v : {1.0, 2.0, std::nextafter(1.0, 0.0), std::nextafter(2.0, 3.0)}) mismatches += color_code(v) != oracle_color(v);
  return {mismatches == 0, fmt("10000-point sweep on [0,4] plus boundaries, mismatches=%d", mismatches)};
}

Outcome generator_calibration() {
  const GeneratorConfig cfg;  // shipped defaults, 25% target
  PolicySimulator sim(cfg);
  const auto& recs = sim.history().records;
  const auto missed = std::count_if(recs.begin(), recs.end(), [](const auto& r) { return r.outcome == noshow::Outcome::Missed; });
  const double rate = static_cast<double>(missed) / static_cast<double>(recs.size());
  const auto rep = sim.simulate(Policy::no_overbook(), 200, 7);
  const double u = rep.utilization_pct.mean;
  const bool ok = recs.size() >= 100000 && std::abs(rate - 0.25) <= 0.01 && std::abs(u - 75.0) <= 1.0;
  return {ok, fmt("n=%zu rate=%.4f no-overbook utilization=%.2f%% (se %.2f)", recs.size(), rate, u,
                  rep.utilization_pct.standard_error)};
}

Outcome auc_oracle() {
  std::mt19937_64 rng(20220503);
  std::uniform_int_distribution<int> size(2, 200), levels(1, 30);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = size(rng);
    std::uniform_int_distribution<int> score(0, levels(rng));
    std::bernoulli_distribution coin(0.3);
    std::vector<double> s(static_cast<std::size_t>(n));
    std::vector<int> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      s[static_cast<std::size_t>(i)] = score(rng) / 7.0;
      y[static_cast<std::size_t>(i)] = coin(rng);
    }
    y[0] = 1;
    y[1] = 0;
    mismatches += roc_auc(s, y) != brute_force_auc(s, y);
  }
  return {mismatches == 0, fmt("1000 instances with ties, exact mismatches=%d", mismatches)};
}

Outcome trivial_classifier_guard() {
  const auto h20 = generate_history(desk_config(0.20));
  std::vector<int> y;
  for (const auto& r : h20.records) y.push_back(r.outcome == noshow::Outcome::Missed);
  const std::vector<double> zeros(y.size(), 0.0);
  const double acc = accuracy_at(zeros, y);
  const double const_auc = roc_auc(zeros, y);

  ForestHyperparams hp;  // library defaults apart from the tree count
  hp.n_trees = 200;
  hp.seed = 1;
  const auto t = train_from_records(desk_history().records, hp);
  const double auc = t.validation.roc_auc;
  const double base = t.baseline_validation.roc_auc;
  const bool ok = std::abs(acc - 0.80) <= 0.01 && const_auc == 0.5 && auc - 0.5 >= 0.15 && auc - base >= 0.02;
  return {ok, fmt("constant: acc=%.4f auc=%.3f; forest auc=%.4f vs history-rate %.4f (train rows %zu)", acc,
                  const_auc, auc, base, t.split.train.size())};
}

Outcome leakage_guard() {
  const auto& recs = desk_history().records;
  const double g = global_no_show_rate(recs);
  const auto full = engineer_features(recs, g);
  std::size_t checked = 0, diffs = 0;
  for (double frac : {0.25, 0.5, 0.9}) {
    const auto cutoff = recs[static_cast<std::size_t>(frac * static_cast<double>(recs.size()))].scheduled_at;
    std::vector<AppointmentRecord> kept;
    for (const auto& r : recs) {
      if (r.scheduled_at < cutoff) kept.push_back(r);
    }
    const auto part = engineer_features(kept, g);
    for (std::size_t i = 0; i < part.size(); ++i) {
      ++checked;
      diffs += !bit_identical(part[i], full[i]);
    }
  }
  return {diffs == 0 && checked > 0, fmt("3 cut dates, %zu feature rows compared, differing=%zu", checked, diffs)};
}

Outcome calibration_sanity() {
  const auto& t = calibrated_model();
  double worst = 0;
  int occupied = 0;
  for (const auto& b : t.validation.calibration) {
    if (b.count == 0) continue;
    ++occupied;
    worst = std::max(worst, std::abs(b.mean_predicted - b.observed_rate));
  }
  return {occupied > 0 && worst <= 0.05,
          fmt("%d occupied deciles on %zu held-out rows, worst |pred-obs|=%.4f", occupied, t.validation.n, worst)};
}

Outcome policy_ordering() {
  const auto model = std::make_shared<const FrozenForestModel>(calibrated_model().model);
  PolicySimulator sim(desk_history(), model);
  const std::vector<Policy> ps = {Policy::no_overbook(), Policy::baseline_rate_floor(),
                                  Policy::model_expectation_floor(), Policy::oracle_floor()};
  const auto cmp = sim.compare(ps, 200, 7);
  auto row = [&](const std::string& name) -> const SimulationReport& {
    return *std::find_if(cmp.rows.begin(), cmp.rows.end(), [&](const auto& r) { return r.policy == name; });
  };
  const auto& none = row("no_overbook");
  const auto& base = row("baseline_rate_floor");
  const auto& mod = row("model_expectation_floor");
  const auto& orc = row("oracle_floor");
  const auto t = paired_test(none.utilization_by_replication, orc.utilization_by_replication);
  const double se = std::hypot(mod.utilization_pct.standard_error, base.utilization_pct.standard_error);
  const bool ok = orc.utilization_pct.mean > none.utilization_pct.mean && t.p_value < 0.01 &&
                  mod.utilization_pct.mean >= base.utilization_pct.mean - se && orc.collision_rate.mean <= 0.15;
  return {ok, fmt("util none=%.2f baseline=%.2f model=%.2f oracle=%.2f; oracle>none p=%.2g; oracle collisions=%.3f",
                  none.utilization_pct.mean, base.utilization_pct.mean, mod.utilization_pct.mean,
                  orc.utilization_pct.mean, t.p_value, orc.collision_rate.mean)};
}

Outcome pipeline_minimality() {
  using test::tasks_with;
  using test::TwoBranchProject;
  std::string detail;
  bool ok = true;
  for (const auto& [source, edit] : TwoBranchProject::edits()) {
    TwoBranchProject p;
    const auto first = p.run();
    const auto second = p.run();
    ok = ok && first.failed().empty() && tasks_with(second, TaskStatus::Skipped) == p.all_tasks();
    p.touch(source);
    const auto want = p.reachable_from(source);
    const auto third = p.run();
    const bool exact = third.failed().empty() && tasks_with(third, TaskStatus::Executed) == want &&
                       tasks_with(third, TaskStatus::Skipped).size() + want.size() == p.all_tasks().size();
    ok = ok && exact;
    detail += fmt("%s%s: %zu/%zu rerun%s", detail.empty() ? "" : "; ", source.c_str(), want.size(),
                  p.all_tasks().size(), exact ? "" : " MISMATCH");
  }
  return {ok, "second run all skipped; " + detail};
}

Outcome service_contract() {
  // Golden bytes.
  const auto fixture = load_snapshot(test::fixture("snapshot"));
  auto get = [&](const PublishedSnapshot* s, std::string path, std::map<std::string, std::string> q = {}) {
    return handle_request(s, HttpRequest{std::move(path), std::move(q)});
  };
  const std::vector<std::pair<std::string, HttpResponse>> goldens = {
      {"healthz", get(fixture.get(), "/healthz")},
      {"meta", get(fixture.get(), "/api/v1/meta")},
      {"providers", get(fixture.get(), "/api/v1/providers")},
      {"heatmap_week1", get(fixture.get(), "/api/v1/heatmap", {{"week", "2022-05-04"}, {"group", "combined"}})},
      {"heatmap_by_provider", get(fixture.get(), "/api/v1/heatmap", {{"week", "2022-05-02"}, {"group", "provider"}})},
      {"heatmap_pediatrics", get(fixture.get(), "/api/v1/heatmap", {{"week", "2022-05-02"}, {"specialty", "pediatrics"}, {"group", "combined"}})},
      {"block_tue_13", get(fixture.get(), "/api/v1/blocks/2022-05-03/13")},
      {"error_bad_week", get(fixture.get(), "/api/v1/heatmap", {{"week", "2022-13-01"}})}};
  int golden_diffs = 0;
  for (const auto& [name, r] : goldens) golden_diffs += read_file(test::golden(name + ".json")) != r.body;

  // Subset property and tooltip sums over every filter combination.
  const std::vector<std::optional<std::string>> providers = {std::nullopt, "D001", "D002"};
  const std::vector<std::optional<std::string>> specialties = {std::nullopt, "family_medicine", "pediatrics"};
  const std::vector<std::optional<std::string>> sites = {std::nullopt, "main", "north"};
  int subset_violations = 0, sum_violations = 0, combos = 0;
  for (const char* week : {"2022-05-02", "2022-05-09"}) {
    const auto all = nlohmann::json::parse(get(fixture.get(), "/api/v1/heatmap", {{"week", week}, {"group", "combined"}}).body);
    for (const auto& pv : providers) {
      for (const auto& sp : specialties) {
        for (const auto& si : sites) {
          std::map<std::string, std::string> q = {{"week", week}, {"group", "combined"}};
          if (pv) q["provider"] = *pv;
          if (sp) q["specialty"] = *sp;
          if (si) q["site"] = *si;
          const auto f = nlohmann::json::parse(get(fixture.get(), "/api/v1/heatmap", q).body);
          ++combos;
          for (std::size_t i = 0; i < f["cells"].size(); ++i) {
            const auto& fc = f["cells"][i];
            const auto& ac = all["cells"][i];
            std::set<std::string> ids;
            for (const auto& a : ac["appointments"]) ids.insert(a["appointment_id"].get<std::string>());
            double sum = 0;
            for (const auto& a : fc["appointments"]) {
              subset_violations += !ids.contains(a["appointment_id"].get<std::string>());
              sum += a["probability"].get<double>();
            }
            subset_violations += fc["expected"].get<double>() > ac["expected"].get<double>() + 1e-12;
            sum_violations += std::abs(sum - fc["expected"].get<double>()) > 1e-9;
          }
        }
      }
    }
  }

  // 100 concurrent requests while the pipeline publishes a new snapshot.
  test::TwoBranchProject p;
  p.run();
  SnapshotStore store(p.ws() / "published");
  ServerOptions opts;
  opts.port = 0;
  opts.poll_interval = std::chrono::milliseconds(1);
  Server server(store, opts);
  const int port = server.start();
  const std::string before = store.current()->id;
  p.touch("vendor_export.csv");

  // Each client keeps asking until the publish has landed and been picked up.
  std::atomic<bool> published{false};
  std::atomic<int> ok{0}, failed{0};
  std::mutex seen_mu;
  std::vector<std::pair<std::string, std::string>> seen;
  {
    std::vector<std::jthread> clients;
    for (int i = 0; i < 100; ++i) {
      clients.emplace_back([&] {
        httplib::Client cli("127.0.0.1", port);
        bool last = false;
        while (!last) {
          last = published.load();
          auto res = cli.Get("/api/v1/heatmap?week=2022-05-02");
          if (!res || res->status != 200) {
            ++failed;
            return;
          }
          ++ok;
          std::lock_guard g(seen_mu);
          seen.emplace_back(nlohmann::json::parse(res->body)["snapshot_id"].get<std::string>(), res->body);
        }
      });
    }
    p.run();
    while (store.current()->id == before) std::this_thread::sleep_for(std::chrono::milliseconds(1));
    published = true;
  }
  store.refresh();
  const std::string after = store.current()->id;
  server.stop();
  // Every body must equal what its own snapshot produces in isolation.
  int torn = 0;
  std::set<std::string> ids;
  std::map<std::string, std::string> expected_body;
  for (const auto& [id, body] : seen) {
    ids.insert(id);
    if (!expected_body.contains(id)) {
      const auto snap = load_snapshot(p.ws() / "published" / id);
      expected_body[id] = get(snap.get(), "/api/v1/heatmap", {{"week", "2022-05-02"}}).body;
    }
    torn += expected_body[id] != body;
  }

  const bool pass = golden_diffs == 0 && subset_violations == 0 && sum_violations == 0 && failed == 0 && torn == 0 &&
                    before != after && ids.size() == 2;
  return {pass, fmt("golden diffs=%d; %d filter combos: subset violations=%d, tooltip-sum violations=%d; "
                    "100 clients across a publish: %d responses, %d failed, torn=%d, snapshots seen=%zu",
                    golden_diffs, combos, subset_violations, sum_violations, ok.load(), failed.load(), torn, ids.size())};
}

}  // namespace

int main() {
  criterion("worked-example", 1, worked_example);
  criterion("threshold-conformance", 1, threshold_conformance);
  criterion("generator-calibration", 30, generator_calibration);
  criterion("auc-oracle", 30, auc_oracle);
  criterion("trivial-classifier-guard", 300, trivial_classifier_guard);
  criterion("leakage-guard", 10, leakage_guard);
  criterion("calibration-sanity", 60, calibration_sanity);
  criterion("policy-ordering", 300, policy_ordering);
  criterion("pipeline-minimality", 10, pipeline_minimality);
  criterion("service-contract", 60, service_contract);
  std::printf("%s: %d of 10 criteria failed\n", failures ? "FAILED" : "OK", failures);
  return failures ? 1 : 0;
}
