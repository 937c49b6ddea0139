#include "noshow/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "noshow/hash.hpp"

namespace noshow {

// ---- FeatureEncoder ----------------------------------------------------------

FeatureEncoder::FeatureEncoder(FeatureSet set, std::vector<std::string> specialties, std::vector<std::string> sites)
    : set_(set), specialties_(std::move(specialties)), sites_(std::move(sites)) {
  std::sort(specialties_.begin(), specialties_.end());
  std::sort(sites_.begin(), sites_.end());
  if (set_.lead_time) columns_.emplace_back("lead_time_days");
  if (set_.hour_of_day) columns_.emplace_back("hour_of_day");
  if (set_.day_of_week) columns_.emplace_back("day_of_week");
  if (set_.season) columns_.emplace_back("season");
  if (set_.hist_rate) columns_.emplace_back("patient_hist_rate");
  if (set_.prior_count) columns_.emplace_back("patient_prior_appointments");
  if (set_.specialty) {
    for (const auto& s : specialties_) columns_.push_back("specialty=" + s);
    columns_.push_back("specialty=" + std::string(kOtherCategory));
  }
  if (set_.site) {
    for (const auto& s : sites_) columns_.push_back("site=" + s);
    columns_.push_back("site=" + std::string(kOtherCategory));
  }
  if (columns_.empty()) throw Error(ErrorCode::InvalidArgument, "feature set selects no columns");
  std::string joined;
  for (const auto& c : columns_) joined += c + '\n';
  fingerprint_ = sha256_hex(joined);
}

FeatureEncoder FeatureEncoder::fit(std::span<const FeatureVector> rows, FeatureSet set) {
  std::set<std::string> specialties, sites;
  for (const auto& r : rows) {
    specialties.insert(r.provider_specialty);
    sites.insert(r.site_id);
  }
  return FeatureEncoder(set, {specialties.begin(), specialties.end()}, {sites.begin(), sites.end()});
}

void FeatureEncoder::encode_row(const FeatureVector& f, std::span<double> out) const {
  std::size_t c = 0;
  if (set_.lead_time) out[c++] = f.lead_time_days;
  if (set_.hour_of_day) out[c++] = f.hour_of_day;
  if (set_.day_of_week) out[c++] = f.day_of_week;
  if (set_.season) out[c++] = static_cast<double>(f.season);
  if (set_.hist_rate) out[c++] = f.patient_hist_rate;
  if (set_.prior_count) out[c++] = f.patient_prior_appointments;
  auto one_hot = [&](const std::vector<std::string>& vocab, const std::string& value) {
    auto it = std::lower_bound(vocab.begin(), vocab.end(), value);
    const std::size_t hit = (it != vocab.end() && *it == value) ? static_cast<std::size_t>(it - vocab.begin())
                                                                 : vocab.size();
    for (std::size_t k = 0; k <= vocab.size(); ++k) out[c++] = k == hit ? 1.0 : 0.0;
  };
  if (set_.specialty) one_hot(specialties_, f.provider_specialty);
  if (set_.site) one_hot(sites_, f.site_id);
}

DesignMatrix FeatureEncoder::encode(std::span<const FeatureVector> rows) const {
  DesignMatrix x;
  x.columns = columns_;
  x.rows = rows.size();
  x.values.resize(rows.size() * columns_.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    encode_row(rows[i], std::span<double>(x.values.data() + i * columns_.size(), columns_.size()));
  }
  return x;
}

// ---- FrozenForestModel -------------------------------------------------------

FrozenForestModel::FrozenForestModel(FeatureEncoder encoder, std::vector<DecisionTree> trees, ForestHyperparams hp,
                                     TrainingMetadata meta)
    : encoder_(std::move(encoder)), trees_(std::move(trees)), hp_(hp), meta_(std::move(meta)) {
  if (trees_.empty()) throw Error(ErrorCode::InvalidArgument, "model needs at least one tree");
}

double FrozenForestModel::predict_row(std::span<const double> encoded) const noexcept {
  return predict_forest(trees_, encoded);
}

nlohmann::ordered_json FrozenForestModel::metadata_json() const {
  nlohmann::ordered_json j;
  j["format_version"] = kFormatVersion;
  j["fingerprint"] = fingerprint();
  j["columns"] = encoder_.columns();
  const auto& s = encoder_.feature_set();
  j["feature_set"] = {{"lead_time", s.lead_time},   {"hour_of_day", s.hour_of_day}, {"day_of_week", s.day_of_week},
                      {"season", s.season},         {"hist_rate", s.hist_rate},     {"prior_count", s.prior_count},
                      {"specialty", s.specialty},   {"site", s.site}};
  j["specialties"] = encoder_.specialties();
  j["sites"] = encoder_.sites();
  j["hyperparams"] = {{"n_trees", hp_.n_trees},
                      {"max_depth", hp_.max_depth ? nlohmann::ordered_json(*hp_.max_depth) : nlohmann::ordered_json()},
                      {"min_leaf_size", hp_.min_leaf_size},
                      {"features_per_split", hp_.resolved_features_per_split(encoder_.columns().size())},
                      {"bootstrap", hp_.bootstrap},
                      {"seed", hp_.seed}};
  j["training"] = {{"train_start", meta_.train_start},
                   {"train_end", meta_.train_end},
                   {"validation_start", meta_.validation_start},
                   {"validation_end", meta_.validation_end},
                   {"n_train", meta_.n_train},
                   {"n_validation", meta_.n_validation},
                   {"train_base_rate", meta_.train_base_rate},
                   {"global_rate", meta_.global_rate},
                   {"pseudo_count", meta_.pseudo_count},
                   {"train_auc", meta_.train_auc},
                   {"validation_auc", meta_.validation_auc ? nlohmann::ordered_json(*meta_.validation_auc) : nlohmann::ordered_json()}};
  return j;
}

// ---- training / prediction ---------------------------------------------------

std::vector<int> labels_of(std::span<const FeatureVector> rows) {
  std::vector<int> y;
  y.reserve(rows.size());
  for (const auto& r : rows) {
    if (!r.label) throw Error(ErrorCode::InvalidRecord, "pending appointment " + r.appointment_id + " has no label");
    y.push_back(r.label->value());
  }
  return y;
}

FrozenForestModel train_forest(std::span<const FeatureVector> train, const ForestHyperparams& hp, FeatureSet set) {
  if (train.empty()) throw Error(ErrorCode::EmptyTrainingSet, "no training rows");
  const auto y = labels_of(train);
  auto encoder = FeatureEncoder::fit(train, set);
  const auto x = encoder.encode(train);
  auto trees = grow_forest(x, y, hp);

  TrainingMetadata meta;
  meta.n_train = train.size();
  meta.train_base_rate =
      static_cast<double>(std::count(y.begin(), y.end(), 1)) / static_cast<double>(y.size());
  std::vector<double> fitted(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) fitted[i] = predict_forest(trees, x.row(i));
  meta.train_auc = roc_auc(fitted, y);
  return FrozenForestModel(std::move(encoder), std::move(trees), hp, std::move(meta));
}

FrozenForestModel train_forest(std::span<const FeatureVector> train, std::span<const FeatureVector> validation,
                               const ForestHyperparams& hp, FeatureSet set) {
  auto model = train_forest(train, hp, set);
  if (validation.empty()) return model;
  const auto y = labels_of(validation);
  auto meta = model.metadata();
  meta.n_validation = validation.size();
  const auto probs = predict_proba(model, validation);
  const auto pos = std::count(y.begin(), y.end(), 1);
  if (pos > 0 && static_cast<std::size_t>(pos) < y.size()) meta.validation_auc = roc_auc(probs, y);
  return FrozenForestModel(model.encoder(), model.trees(), model.hyperparams(), std::move(meta));
}

std::vector<double> predict_proba(const FrozenForestModel& model, std::span<const FeatureVector> rows) {
  const auto& enc = model.encoder();
  std::vector<double> buf(enc.columns().size());
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    enc.encode_row(r, buf);
    out.push_back(model.predict_row(buf));
  }
  return out;
}

std::vector<double> predict_proba(const FrozenForestModel& model, const DesignMatrix& x) {
  if (x.columns != model.encoder().columns()) {
    throw Error(ErrorCode::SchemaMismatch, "feature layout does not match model fingerprint " + model.fingerprint());
  }
  std::vector<double> out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) out[i] = model.predict_row(x.row(i));
  return out;
}

std::vector<double> baseline_predict(std::span<const FeatureVector> rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.patient_hist_rate);
  return out;
}

TemporalSplit temporal_split(std::span<const AppointmentRecord> records, double validation_fraction) {
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "validation_fraction must lie in (0, 1)");
  }
  if (records.empty()) throw Error(ErrorCode::EmptyTrainingSet, "nothing to split");
  Date lo = records.front().scheduled_at.local_date(), hi = lo;
  for (const auto& r : records) {
    lo = std::min(lo, r.scheduled_at.local_date());
    hi = std::max(hi, r.scheduled_at.local_date());
  }
  const auto span_days = (hi - lo).count() + 1;
  TemporalSplit split;
  split.cutoff = lo + std::chrono::days{static_cast<long>(
                          std::llround((1.0 - validation_fraction) * static_cast<double>(span_days)))};
  for (std::size_t i = 0; i < records.size(); ++i) {
    (records[i].scheduled_at.local_date() < split.cutoff ? split.train : split.validation).push_back(i);
  }
  return split;
}

TrainedModel train_from_records(std::span<const AppointmentRecord> records, const ForestHyperparams& hp,
                                FeatureSet set, double validation_fraction, double pseudo_count) {
  auto split = temporal_split(records, validation_fraction);
  if (split.train.empty()) throw Error(ErrorCode::EmptyTrainingSet, "training window is empty");
  std::vector<AppointmentRecord> train_records;
  train_records.reserve(split.train.size());
  for (auto i : split.train) train_records.push_back(records[i]);
  const double global = global_no_show_rate(train_records);

  auto features = engineer_features(records, global, pseudo_count);
  std::vector<FeatureVector> train, validation;
  for (auto i : split.train) train.push_back(features[i]);
  for (auto i : split.validation) validation.push_back(features[i]);

  auto fitted = train_forest(train, validation, hp, set);
  TrainingMetadata meta = fitted.metadata();
  auto date_of = [&](std::size_t i) { return format_date(records[i].scheduled_at.local_date()); };
  meta.train_start = date_of(split.train.front());
  meta.train_end = date_of(split.train.back());
  if (!split.validation.empty()) {
    meta.validation_start = date_of(split.validation.front());
    meta.validation_end = date_of(split.validation.back());
  }
  meta.global_rate = global;
  meta.pseudo_count = pseudo_count;

  TrainedModel out{FrozenForestModel(fitted.encoder(), fitted.trees(), fitted.hyperparams(), std::move(meta)),
                   std::move(split), std::move(features), {}, {}};
  if (!validation.empty()) {
    const auto y = labels_of(validation);
    out.validation = evaluate(predict_proba(out.model, validation), y);
    out.baseline_validation = evaluate(baseline_predict(validation), y);
  }
  return out;
}

TuningResult tune_forest(std::span<const FeatureVector> train, std::span<const FeatureVector> validation,
                         const ForestHyperparams& base, std::span<const int> n_trees_grid,
                         std::span<const int> min_leaf_grid, FeatureSet set) {
  if (n_trees_grid.empty() || min_leaf_grid.empty()) throw Error(ErrorCode::InvalidArgument, "empty tuning grid");
  const auto y = labels_of(validation);
  TuningResult result;
  double best_auc = -1.0;
  for (int trees : n_trees_grid) {
    for (int leaf : min_leaf_grid) {
      ForestHyperparams hp = base;
      hp.n_trees = trees;
      hp.min_leaf_size = leaf;
      const auto model = train_forest(train, hp, set);
      const double auc = roc_auc(predict_proba(model, validation), y);
      result.trials.push_back({trees, leaf, auc});
      if (auc > best_auc) {
        best_auc = auc;
        result.best = hp;
      }
    }
  }
  return result;
}

}  // namespace noshow
