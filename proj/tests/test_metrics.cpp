#include <doctest.h>

#include <random>
#include <vector>

#include "noshow/metrics.hpp"
#include "support.hpp"

using namespace noshow;
using noshow::test::error_code_of;

namespace {

// O(n^2) pairwise concordance.
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

}  // namespace

TEST_CASE("auc hand example") {
  // Positives 0.9, 0.4; negatives 0.8, 0.3: 3 of 4 pairs concordant.
  std::vector<double> s = {0.9, 0.8, 0.4, 0.3};
  std::vector<int> y = {1, 0, 1, 0};
  CHECK(roc_auc(s, y) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("auc boundaries and ties") {
  std::vector<int> y = {0, 0, 1, 1};
  CHECK(roc_auc(std::vector<double>{0.1, 0.2, 0.3, 0.4}, y) == 1.0);
  CHECK(roc_auc(std::vector<double>{0.4, 0.3, 0.2, 0.1}, y) == 0.0);
  CHECK(roc_auc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, y) == 0.5);
  CHECK(error_code_of([] { roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}); }) == ErrorCode::SingleClass);
}

TEST_CASE("auc matches the pairwise definition on random data with ties") {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> coarse(0, 20);
  std::bernoulli_distribution coin(0.3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s(300);
    std::vector<int> y(300);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = coarse(rng) / 20.0;
      y[i] = coin(rng) ? 1 : 0;
    }
    CHECK(roc_auc(s, y) == doctest::Approx(brute_force_auc(s, y)).epsilon(1e-12));
  }
}

TEST_CASE("auc is invariant under monotone transforms") {
  std::vector<double> s = {0.1, 0.7, 0.3, 0.9, 0.2, 0.6};
  std::vector<int> y = {0, 1, 0, 1, 1, 0};
  std::vector<double> t;
  for (double v : s) t.push_back(v * v * 10 + 3);
  CHECK(roc_auc(s, y) == roc_auc(t, y));
}

TEST_CASE("roc curve runs corner to corner") {
  std::vector<double> s = {0.9, 0.8, 0.4, 0.3};
  std::vector<int> y = {1, 0, 1, 0};
  auto c = roc_curve(s, y);
  REQUIRE(c.size() == 5);
  CHECK(c.front().fpr == 0.0);
  CHECK(c.front().tpr == 0.0);
  CHECK(c.back().fpr == 1.0);
  CHECK(c.back().tpr == 1.0);
  double area = 0;
  for (std::size_t i = 1; i < c.size(); ++i) area += (c[i].fpr - c[i - 1].fpr) * (c[i].tpr + c[i - 1].tpr) / 2;
  CHECK(area == doctest::Approx(0.75));
}

TEST_CASE("calibration bins") {
  std::vector<double> p = {0.05, 0.15, 0.15, 0.95, 1.0};
  std::vector<int> y = {0, 1, 0, 1, 1};
  auto bins = calibration_table(p, y, 10);
  REQUIRE(bins.size() == 10);
  CHECK(bins[0].count == 1);
  CHECK(bins[1].count == 2);
  CHECK(bins[1].mean_predicted == doctest::Approx(0.15));
  CHECK(bins[1].observed_rate == 0.5);
  CHECK(bins[5].count == 0);
  CHECK(bins[9].count == 2);  // 1.0 lands in the last bin
  CHECK(bins[9].lower == doctest::Approx(0.9));
}

TEST_CASE("accuracy and evaluation report") {
  std::vector<double> p = {0.9, 0.6, 0.4, 0.1};
  std::vector<int> y = {1, 0, 1, 0};
  CHECK(accuracy_at(p, y) == 0.5);
  auto r = evaluate(p, y);
  CHECK(r.n == 4);
  CHECK(r.base_rate == 0.5);
  CHECK(r.roc_auc == 0.75);
  auto j = r.to_json();
  CHECK(j["roc_auc"] == 0.75);
  CHECK(j["calibration"].size() == 10);
}
