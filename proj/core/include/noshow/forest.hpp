#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace noshow {

/// Row-major numeric design matrix with named columns.
struct DesignMatrix {
  std::vector<std::string> columns;
  std::size_t rows = 0;
  std::vector<double> values;

  std::size_t cols() const noexcept { return columns.size(); }
  std::span<const double> row(std::size_t i) const noexcept {
    return {values.data() + i * cols(), cols()};
  }
  double at(std::size_t r, std::size_t c) const noexcept { return values[r * cols() + c]; }
};

struct ForestHyperparams {
  int n_trees = 500;
  std::optional<int> max_depth;  // nullopt = unlimited
  int min_leaf_size = 10;
  std::optional<int> features_per_split;  // nullopt = ceil(sqrt(p))
  bool bootstrap = true;
  std::uint64_t seed = 0;
  /// Worker threads for training; 0 = hardware concurrency. Does not affect output.
  int threads = 0;

  int resolved_features_per_split(std::size_t n_features) const;
};

/// Flat binary tree. Internal nodes send `x[feature] <= threshold` left;
/// leaves (feature == -1) hold the Laplace-corrected missed fraction.
struct TreeNode {
  std::int32_t feature = -1;
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;

  bool is_leaf() const noexcept { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(std::span<const double> row) const noexcept;
  std::size_t leaf_count() const noexcept;
  std::size_t depth() const noexcept;
  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
};

/// Gini-minimizing random forest. Tree i draws from derive_seed(hp.seed, {i}),
/// so the result is independent of thread count. Labels are 0/1.
/// Throws EmptyTrainingSet / DegenerateLabels.
std::vector<DecisionTree> grow_forest(const DesignMatrix& x, std::span<const int> labels,
                                      const ForestHyperparams& hp);

double predict_forest(std::span<const DecisionTree> trees, std::span<const double> row) noexcept;

}  // namespace noshow
