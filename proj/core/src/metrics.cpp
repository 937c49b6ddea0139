#include "noshow/metrics.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <numeric>

#include "noshow/error.hpp"

namespace noshow {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorCode::InvalidArgument, "scores and labels differ in length");
  }
}

std::pair<std::size_t, std::size_t> class_counts(std::span<const int> labels) {
  std::size_t pos = 0;
  for (int l : labels) pos += l != 0;
  return {pos, labels.size() - pos};
}

std::vector<std::size_t> order_by_score(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return order;
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const auto [n_pos, n_neg] = class_counts(labels);
  if (n_pos == 0 || n_neg == 0) throw Error(ErrorCode::SingleClass, "AUC needs both classes");

  // Twice the mid-rank keeps everything integral: a tie group occupying
  // 1-based ranks [i+1, j] has mid-rank (i+1+j)/2.
  const auto order = order_by_score(scores);
  const std::size_t n = scores.size();
  std::uint64_t rank_sum_x2 = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t mid_x2 = i + 1 + j;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0) rank_sum_x2 += mid_x2;
    }
    i = j;
  }
  // 2U = 2R - n_pos (n_pos + 1)
  const std::uint64_t u_x2 = rank_sum_x2 - static_cast<std::uint64_t>(n_pos) * (n_pos + 1);
  return static_cast<double>(u_x2) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const auto [n_pos, n_neg] = class_counts(labels);
  if (n_pos == 0 || n_neg == 0) throw Error(ErrorCode::SingleClass, "ROC curve needs both classes");
  auto order = order_by_score(scores);
  std::reverse(order.begin(), order.end());

  std::vector<RocPoint> pts{{0.0, 0.0}};
  std::size_t tp = 0, fp = 0, i = 0;
  while (i < order.size()) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] != 0 ? tp : fp)++;
      ++i;
    }
    pts.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                   static_cast<double>(tp) / static_cast<double>(n_pos)});
  }
  return pts;
}

double accuracy_at(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_inputs(scores, labels);
  if (scores.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    correct += (scores[i] >= threshold) == (labels[i] != 0);
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

std::vector<CalibrationBin> calibration_table(std::span<const double> probs, std::span<const int> labels,
                                              int n_bins) {
  check_inputs(probs, labels);
  if (n_bins < 2) throw Error(ErrorCode::InvalidArgument, "calibration needs at least 2 bins");
  std::vector<CalibrationBin> bins(static_cast<std::size_t>(n_bins));
  std::vector<double> sum_p(bins.size(), 0.0);
  std::vector<std::size_t> positives(bins.size(), 0);
  for (std::size_t b = 0; b < bins.size(); ++b) {
    bins[b].lower = static_cast<double>(b) / n_bins;
    bins[b].upper = static_cast<double>(b + 1) / n_bins;
  }
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = probs[i];
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::OutOfRangeProbability, "probability outside [0, 1]");
    auto b = std::min(static_cast<std::size_t>(p * n_bins), bins.size() - 1);
    sum_p[b] += p;
    positives[b] += labels[i] != 0;
    ++bins[b].count;
  }
  for (std::size_t b = 0; b < bins.size(); ++b) {
    if (bins[b].count == 0) continue;
    bins[b].mean_predicted = sum_p[b] / static_cast<double>(bins[b].count);
    bins[b].observed_rate = static_cast<double>(positives[b]) / static_cast<double>(bins[b].count);
  }
  return bins;
}

EvaluationReport evaluate(std::span<const double> probs, std::span<const int> labels, int n_bins) {
  EvaluationReport r;
  r.n = probs.size();
  r.roc_auc = roc_auc(probs, labels);
  r.accuracy = accuracy_at(probs, labels, 0.5);
  r.base_rate = static_cast<double>(class_counts(labels).first) / static_cast<double>(labels.size());
  r.calibration = calibration_table(probs, labels, n_bins);
  r.roc_points = roc_curve(probs, labels);
  return r;
}

nlohmann::ordered_json EvaluationReport::to_json() const {
  nlohmann::ordered_json j;
  j["n"] = n;
  j["roc_auc"] = roc_auc;
  j["accuracy_at_0_5"] = accuracy;
  j["base_rate"] = base_rate;
  auto& cal = j["calibration"] = nlohmann::ordered_json::array();
  for (const auto& b : calibration) {
    cal.push_back({{"lower", b.lower},
                   {"upper", b.upper},
                   {"mean_predicted", b.mean_predicted},
                   {"observed_rate", b.observed_rate},
                   {"count", b.count}});
  }
  auto& roc = j["roc_points"] = nlohmann::ordered_json::array();
  for (const auto& p : roc_points) roc.push_back({p.fpr, p.tpr});
  return j;
}

std::string EvaluationReport::to_text() const {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "n=%zu  base_rate=%.4f  roc_auc=%.4f  accuracy@0.5=%.4f\n", n, base_rate,
                roc_auc, accuracy);
  out += buf;
  out += "calibration:\n  bin            count   mean_pred  observed\n";
  for (const auto& b : calibration) {
    std::snprintf(buf, sizeof buf, "  [%.2f, %.2f)  %7zu   %.4f     %.4f\n", b.lower, b.upper, b.count,
                  b.mean_predicted, b.observed_rate);
    out += buf;
  }
  return out;
}

}  // namespace noshow
