#pragma once

#include <nlohmann/json.hpp>

#include <span>
#include <string>
#include <vector>

namespace noshow {

/// Area under the ROC curve as the Mann-Whitney concordance
/// P(score_pos > score_neg) + 0.5 P(tie), from mid-ranks. Labels are 0/1.
/// Throws SingleClass if either class is absent.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

/// One point per distinct score threshold, from (0,0) to (1,1).
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);

/// Fraction correct when predicting "missed" for score >= threshold.
double accuracy_at(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

struct CalibrationBin {
  double lower = 0.0;
  double upper = 0.0;
  double mean_predicted = 0.0;
  double observed_rate = 0.0;
  std::size_t count = 0;
};

/// Equal-width bins on [0, 1]; p == 1 falls in the last bin. Empty bins are
/// kept with count 0.
std::vector<CalibrationBin> calibration_table(std::span<const double> probs, std::span<const int> labels,
                                              int n_bins);

struct EvaluationReport {
  double roc_auc = 0.0;
  double accuracy = 0.0;  // at threshold 0.5
  double base_rate = 0.0;
  std::size_t n = 0;
  std::vector<CalibrationBin> calibration;
  std::vector<RocPoint> roc_points;

  nlohmann::ordered_json to_json() const;
  std::string to_text() const;
};

EvaluationReport evaluate(std::span<const double> probs, std::span<const int> labels, int n_bins = 10);

}  // namespace noshow
