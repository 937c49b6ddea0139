#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "noshow/forest.hpp"
#include "noshow/ingest.hpp"
#include "noshow/metrics.hpp"

namespace noshow {

/// Feature groups fed to the forest; disabling one ablates it.
struct FeatureSet {
  bool lead_time = true;
  bool hour_of_day = true;
  bool day_of_week = true;
  bool season = true;
  bool hist_rate = true;
  bool prior_count = true;
  bool specialty = true;
  bool site = true;

  friend bool operator==(const FeatureSet&, const FeatureSet&) = default;
};

inline constexpr std::string_view kOtherCategory = "<other>";

/// Turns FeatureVectors into forest columns. Categoricals are one-hot over
/// the training vocabulary plus an "<other>" column for unseen values.
class FeatureEncoder {
 public:
  FeatureEncoder() = default;
  FeatureEncoder(FeatureSet set, std::vector<std::string> specialties, std::vector<std::string> sites);

  static FeatureEncoder fit(std::span<const FeatureVector> rows, FeatureSet set = {});

  const FeatureSet& feature_set() const noexcept { return set_; }
  const std::vector<std::string>& specialties() const noexcept { return specialties_; }
  const std::vector<std::string>& sites() const noexcept { return sites_; }
  const std::vector<std::string>& columns() const noexcept { return columns_; }
  /// Hash of the column layout; models refuse matrices with another layout.
  const std::string& fingerprint() const noexcept { return fingerprint_; }

  void encode_row(const FeatureVector& f, std::span<double> out) const;
  DesignMatrix encode(std::span<const FeatureVector> rows) const;

 private:
  FeatureSet set_;
  std::vector<std::string> specialties_;
  std::vector<std::string> sites_;
  std::vector<std::string> columns_;
  std::string fingerprint_;
};

struct TrainingMetadata {
  std::string train_start;  // ISO dates of the scheduled_at range
  std::string train_end;
  std::string validation_start;
  std::string validation_end;
  std::size_t n_train = 0;
  std::size_t n_validation = 0;
  double train_base_rate = 0.0;
  /// Clinic-wide rate the history feature was smoothed toward.
  double global_rate = 0.0;
  double pseudo_count = kDefaultPseudoCount;
  double train_auc = 0.0;
  std::optional<double> validation_auc;
};

/// A trained ensemble. Exposes no mutators: once built it is only read.
class FrozenForestModel {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  FrozenForestModel(FeatureEncoder encoder, std::vector<DecisionTree> trees, ForestHyperparams hp,
                    TrainingMetadata meta);

  const FeatureEncoder& encoder() const noexcept { return encoder_; }
  const std::vector<DecisionTree>& trees() const noexcept { return trees_; }
  const ForestHyperparams& hyperparams() const noexcept { return hp_; }
  const TrainingMetadata& metadata() const noexcept { return meta_; }
  const std::string& fingerprint() const noexcept { return encoder_.fingerprint(); }

  /// Mean leaf value across trees for an encoded row.
  double predict_row(std::span<const double> encoded) const noexcept;

  nlohmann::ordered_json metadata_json() const;

 private:
  FeatureEncoder encoder_;
  std::vector<DecisionTree> trees_;
  ForestHyperparams hp_;
  TrainingMetadata meta_;
};

/// Labels as 0/1; throws InvalidRecord on a pending row.
std::vector<int> labels_of(std::span<const FeatureVector> rows);

/// Fits encoder and forest. Throws EmptyTrainingSet / DegenerateLabels.
FrozenForestModel train_forest(std::span<const FeatureVector> train, const ForestHyperparams& hp,
                               FeatureSet set = {});

/// Like train_forest, additionally scoring `validation` into the metadata.
FrozenForestModel train_forest(std::span<const FeatureVector> train, std::span<const FeatureVector> validation,
                               const ForestHyperparams& hp, FeatureSet set = {});

std::vector<double> predict_proba(const FrozenForestModel& model, std::span<const FeatureVector> rows);
/// Throws SchemaMismatch if the matrix layout differs from the model's.
std::vector<double> predict_proba(const FrozenForestModel& model, const DesignMatrix& x);

/// The clinic's original predictor: the patient's smoothed historical rate.
std::vector<double> baseline_predict(std::span<const FeatureVector> rows);

/// Chronological split: validation holds appointments on or after the date
/// at `1 - validation_fraction` of the calendar range.
struct TemporalSplit {
  Date cutoff;
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

TemporalSplit temporal_split(std::span<const AppointmentRecord> records, double validation_fraction = 0.2);

struct TrainedModel {
  FrozenForestModel model;
  TemporalSplit split;
  std::vector<FeatureVector> features;  // aligned with the input records
  EvaluationReport validation;          // forest on the validation window
  EvaluationReport baseline_validation; // historical-rate predictor, same rows
};

/// Temporal split, features with the training-window global rate, forest fit
/// on the training window and both predictors scored on the validation window.
/// Records must be sorted and fully labeled.
TrainedModel train_from_records(std::span<const AppointmentRecord> records, const ForestHyperparams& hp,
                                FeatureSet set = {}, double validation_fraction = 0.2,
                                double pseudo_count = kDefaultPseudoCount);

struct TuningResult {
  ForestHyperparams best;
  struct Trial {
    int n_trees;
    int min_leaf_size;
    double validation_auc;
  };
  std::vector<Trial> trials;
};

/// Grid over n_trees x min_leaf_size, chosen by validation AUC. Ties go to
/// the earlier grid entry.
TuningResult tune_forest(std::span<const FeatureVector> train, std::span<const FeatureVector> validation,
                         const ForestHyperparams& base, std::span<const int> n_trees_grid,
                         std::span<const int> min_leaf_grid, FeatureSet set = {});

inline constexpr int kDefaultTreeGrid[] = {100, 300, 500};
inline constexpr int kDefaultLeafGrid[] = {10, 25, 50, 100};

}  // namespace noshow
