#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "noshow/aggregate.hpp"
#include "noshow/datagen.hpp"
#include "noshow/ingest.hpp"
#include "noshow/metrics.hpp"
#include "noshow/model.hpp"

namespace {

using namespace noshow;

const SyntheticHistory& history() {
  static const SyntheticHistory h = [] {
    GeneratorConfig c;
    c.n_providers = 4;
    c.n_patients = 2000;
    c.horizon_days = 365;
    c.seed = 5;
    return generate_history(c);
  }();
  return h;
}

const std::vector<FeatureVector>& features() {
  static const auto f = engineer_features(history().records, global_no_show_rate(history().records));
  return f;
}

void BM_Generate(benchmark::State& state) {
  GeneratorConfig c;
  c.n_providers = 4;
  c.horizon_days = static_cast<int>(state.range(0));
  c.seed = 1;
  for (auto _ : state) benchmark::DoNotOptimize(generate_history(c));
}
BENCHMARK(BM_Generate)->Arg(90)->Arg(365)->Unit(benchmark::kMillisecond);

void BM_EngineerFeatures(benchmark::State& state) {
  const auto& recs = history().records;
  const double rate = global_no_show_rate(recs);
  for (auto _ : state) benchmark::DoNotOptimize(engineer_features(recs, rate));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(recs.size()));
}
BENCHMARK(BM_EngineerFeatures)->Unit(benchmark::kMillisecond);

void BM_TrainForest(benchmark::State& state) {
  ForestHyperparams hp;
  hp.n_trees = static_cast<int>(state.range(0));
  hp.min_leaf_size = 100;
  hp.threads = static_cast<int>(state.range(1));
  hp.seed = 3;
  for (auto _ : state) benchmark::DoNotOptimize(train_forest(features(), hp));
}
BENCHMARK(BM_TrainForest)->Args({20, 1})->Args({20, 0})->Args({100, 0})->Unit(benchmark::kMillisecond);

void BM_PredictProba(benchmark::State& state) {
  ForestHyperparams hp;
  hp.n_trees = 100;
  hp.min_leaf_size = 100;
  hp.seed = 3;
  static const auto model = train_forest(features(), hp);
  const auto x = model.encoder().encode(features());
  for (auto _ : state) benchmark::DoNotOptimize(predict_proba(model, x));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(features().size()));
}
BENCHMARK(BM_PredictProba)->Unit(benchmark::kMillisecond);

void BM_RocAuc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u;
  std::vector<double> scores(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = u(rng);
    labels[i] = u(rng) < scores[i] ? 1 : 0;
  }
  for (auto _ : state) benchmark::DoNotOptimize(roc_auc(scores, labels));
  state.SetComplexityN(static_cast<std::int64_t>(n));
}
BENCHMARK(BM_RocAuc)->Range(1 << 10, 1 << 20)->Complexity(benchmark::oNLogN);

void BM_Heatmap(benchmark::State& state) {
  std::vector<ScoredAppointment> scored;
  const auto& recs = history().records;
  for (const auto& r : recs) {
    scored.push_back({r.appointment_id, r.provider_id, r.provider_specialty, r.site_id, r.scheduled_at, 0.25});
  }
  const auto week = WeekRange::containing(recs.front().scheduled_at.local_date());
  for (auto _ : state) benchmark::DoNotOptimize(build_provider_heatmaps(scored, week, {}, {}));
}
BENCHMARK(BM_Heatmap)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
