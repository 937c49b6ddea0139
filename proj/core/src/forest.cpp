#include "noshow/forest.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include "noshow/error.hpp"
#include "noshow/random.hpp"

namespace noshow {

int ForestHyperparams::resolved_features_per_split(std::size_t n_features) const {
  if (features_per_split) return *features_per_split;
  return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n_features))));
}

double DecisionTree::predict(std::span<const double> row) const noexcept {
  std::int32_t i = 0;
  while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
    const auto& n = nodes[static_cast<std::size_t>(i)];
    i = row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(i)].value;
}

std::size_t DecisionTree::leaf_count() const noexcept {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

std::size_t DecisionTree::depth() const noexcept {
  if (nodes.empty()) return 0;
  std::vector<std::pair<std::int32_t, std::size_t>> stack{{0, 0}};
  std::size_t deepest = 0;
  while (!stack.empty()) {
    auto [i, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    const auto& n = nodes[static_cast<std::size_t>(i)];
    if (!n.is_leaf()) {
      stack.push_back({n.left, d + 1});
      stack.push_back({n.right, d + 1});
    }
  }
  return deepest;
}

double predict_forest(std::span<const DecisionTree> trees, std::span<const double> row) noexcept {
  double sum = 0.0;
  for (const auto& t : trees) sum += t.predict(row);
  return sum / static_cast<double>(trees.size());
}

namespace {

/// Dense per-feature ranks so split search works on small integers.
struct ColumnIndex {
  std::vector<std::vector<double>> unique;
  std::vector<std::vector<std::uint32_t>> rank;
};

ColumnIndex index_columns(const DesignMatrix& x) {
  ColumnIndex idx;
  idx.unique.resize(x.cols());
  idx.rank.resize(x.cols());
  std::vector<double> col(x.rows);
  for (std::size_t f = 0; f < x.cols(); ++f) {
    for (std::size_t r = 0; r < x.rows; ++r) col[r] = x.at(r, f);
    auto& u = idx.unique[f];
    u = col;
    std::sort(u.begin(), u.end());
    u.erase(std::unique(u.begin(), u.end()), u.end());
    auto& rk = idx.rank[f];
    rk.resize(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) {
      rk[r] = static_cast<std::uint32_t>(std::lower_bound(u.begin(), u.end(), col[r]) - u.begin());
    }
  }
  return idx;
}

struct Split {
  int feature = -1;
  std::uint32_t rank = 0;  // samples with rank <= this go left
  double threshold = 0.0;
  double score = 0.0;      // sum over children of pos*neg/n (Gini * n / 2)
};

class TreeBuilder {
 public:
  TreeBuilder(const ColumnIndex& index, std::span<const int> labels, const ForestHyperparams& hp, int mtry)
      : index_(index), labels_(labels), hp_(hp), mtry_(mtry) {
    std::size_t max_unique = 0;
    for (const auto& u : index_.unique) max_unique = std::max(max_unique, u.size());
    hist_total_.assign(max_unique, 0);
    hist_pos_.assign(max_unique, 0);
    features_.resize(index_.unique.size());
  }

  DecisionTree build(std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t n = labels_.size();
    std::vector<std::uint32_t> samples(n);
    if (hp_.bootstrap) {
      for (auto& s : samples) s = static_cast<std::uint32_t>(rng.below(n));
    } else {
      std::iota(samples.begin(), samples.end(), 0u);
    }

    DecisionTree tree;
    tree.nodes.emplace_back();
    struct Work {
      std::int32_t node;
      std::size_t begin, end;
      int depth;
    };
    std::vector<Work> stack{{0, 0, samples.size(), 0}};
    while (!stack.empty()) {
      const Work w = stack.back();
      stack.pop_back();
      std::span<std::uint32_t> node_samples(samples.data() + w.begin, w.end - w.begin);
      std::size_t pos = 0;
      for (auto s : node_samples) pos += labels_[s] != 0;
      const std::size_t cnt = node_samples.size();

      const bool stop = cnt < 2 * static_cast<std::size_t>(hp_.min_leaf_size) || pos == 0 || pos == cnt ||
                        (hp_.max_depth && w.depth >= *hp_.max_depth);
      std::optional<Split> split;
      if (!stop) split = best_split(node_samples, pos, rng);
      if (!split) {
        auto& leaf = tree.nodes[static_cast<std::size_t>(w.node)];
        leaf.feature = -1;
        leaf.value = (static_cast<double>(pos) + 1.0) / (static_cast<double>(cnt) + 2.0);
        continue;
      }

      const auto& rank = index_.rank[static_cast<std::size_t>(split->feature)];
      auto mid = std::partition(node_samples.begin(), node_samples.end(),
                                [&](std::uint32_t s) { return rank[s] <= split->rank; });
      const std::size_t left_end = w.begin + static_cast<std::size_t>(mid - node_samples.begin());

      const auto left = static_cast<std::int32_t>(tree.nodes.size());
      tree.nodes.emplace_back();
      const auto right = static_cast<std::int32_t>(tree.nodes.size());
      tree.nodes.emplace_back();
      auto& node = tree.nodes[static_cast<std::size_t>(w.node)];
      node.feature = split->feature;
      node.threshold = split->threshold;
      node.left = left;
      node.right = right;
      // Right pushed first so the left subtree is laid out first.
      stack.push_back({right, left_end, w.end, w.depth + 1});
      stack.push_back({left, w.begin, left_end, w.depth + 1});
    }
    return tree;
  }

 private:
  std::optional<Split> best_split(std::span<const std::uint32_t> samples, std::size_t pos, Rng& rng) {
    const std::size_t p = features_.size();
    std::iota(features_.begin(), features_.end(), 0);
    for (int i = 0; i < mtry_; ++i) {
      auto j = static_cast<std::size_t>(i) + rng.below(p - static_cast<std::size_t>(i));
      std::swap(features_[static_cast<std::size_t>(i)], features_[j]);
    }
    std::sort(features_.begin(), features_.begin() + mtry_);

    const double n = static_cast<double>(samples.size());
    const double parent = static_cast<double>(pos) * (n - static_cast<double>(pos)) / n;
    std::optional<Split> best;
    double best_score = parent - 1e-9;
    for (int k = 0; k < mtry_; ++k) {
      const int f = features_[static_cast<std::size_t>(k)];
      scan_feature(f, samples, pos, best, best_score);
    }
    return best;
  }

  void consider(int f, std::uint32_t left_rank, std::uint32_t right_rank, std::size_t n_left, std::size_t pos_left,
                std::size_t n, std::size_t pos, std::optional<Split>& best, double& best_score) const {
    const auto min_leaf = static_cast<std::size_t>(hp_.min_leaf_size);
    const std::size_t n_right = n - n_left;
    if (n_left < min_leaf || n_right < min_leaf) return;
    const std::size_t pos_right = pos - pos_left;
    const double score =
        static_cast<double>(pos_left) * static_cast<double>(n_left - pos_left) / static_cast<double>(n_left) +
        static_cast<double>(pos_right) * static_cast<double>(n_right - pos_right) / static_cast<double>(n_right);
    if (score < best_score) {
      const auto& u = index_.unique[static_cast<std::size_t>(f)];
      double thr = 0.5 * (u[left_rank] + u[right_rank]);
      if (!(thr < u[right_rank])) thr = u[left_rank];
      best_score = score;
      best = Split{f, left_rank, thr, score};
    }
  }

  void scan_feature(int f, std::span<const std::uint32_t> samples, std::size_t pos, std::optional<Split>& best,
                    double& best_score) {
    const auto& rank = index_.rank[static_cast<std::size_t>(f)];
    const std::size_t n_unique = index_.unique[static_cast<std::size_t>(f)].size();
    if (n_unique < 2) return;
    const std::size_t n = samples.size();

    if (n_unique <= 4 * n) {
      for (auto s : samples) {
        ++hist_total_[rank[s]];
        hist_pos_[rank[s]] += static_cast<std::uint32_t>(labels_[s] != 0);
      }
      std::size_t n_left = 0, pos_left = 0;
      std::uint32_t prev = 0;
      bool have_prev = false;
      for (std::uint32_t r = 0; r < n_unique; ++r) {
        if (hist_total_[r] == 0) continue;
        if (have_prev) consider(f, prev, r, n_left, pos_left, n, pos, best, best_score);
        n_left += hist_total_[r];
        pos_left += hist_pos_[r];
        prev = r;
        have_prev = true;
        hist_total_[r] = 0;
        hist_pos_[r] = 0;
      }
      return;
    }

    sorted_.clear();
    for (auto s : samples) sorted_.push_back({rank[s], static_cast<std::uint32_t>(labels_[s] != 0)});
    std::sort(sorted_.begin(), sorted_.end());
    std::size_t n_left = 0, pos_left = 0;
    std::size_t i = 0;
    while (i < sorted_.size()) {
      const std::uint32_t r = sorted_[i].first;
      if (i > 0) consider(f, sorted_[i - 1].first, r, n_left, pos_left, n, pos, best, best_score);
      while (i < sorted_.size() && sorted_[i].first == r) {
        ++n_left;
        pos_left += sorted_[i].second;
        ++i;
      }
    }
  }

  const ColumnIndex& index_;
  std::span<const int> labels_;
  const ForestHyperparams& hp_;
  int mtry_;
  std::vector<std::uint32_t> hist_total_;
  std::vector<std::uint32_t> hist_pos_;
  std::vector<int> features_;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> sorted_;
};

}  // namespace

std::vector<DecisionTree> grow_forest(const DesignMatrix& x, std::span<const int> labels,
                                      const ForestHyperparams& hp) {
  if (x.rows == 0) throw Error(ErrorCode::EmptyTrainingSet, "no training rows");
  if (labels.size() != x.rows) throw Error(ErrorCode::InvalidArgument, "label count differs from row count");
  if (x.values.size() != x.rows * x.cols()) throw Error(ErrorCode::InvalidArgument, "design matrix is ragged");
  const auto positives = std::count_if(labels.begin(), labels.end(), [](int l) { return l != 0; });
  if (positives == 0 || static_cast<std::size_t>(positives) == labels.size()) {
    throw Error(ErrorCode::DegenerateLabels, "training labels contain a single class");
  }
  if (hp.n_trees < 1) throw Error(ErrorCode::InvalidArgument, "n_trees must be positive");
  if (hp.min_leaf_size < 1) throw Error(ErrorCode::InvalidArgument, "min_leaf_size must be positive");
  if (hp.max_depth && *hp.max_depth < 1) throw Error(ErrorCode::InvalidArgument, "max_depth must be positive");
  const int mtry = hp.resolved_features_per_split(x.cols());
  if (mtry < 1 || static_cast<std::size_t>(mtry) > x.cols()) {
    throw Error(ErrorCode::InvalidArgument, "features_per_split must lie in [1, feature count]");
  }

  const ColumnIndex index = index_columns(x);
  std::vector<DecisionTree> trees(static_cast<std::size_t>(hp.n_trees));
  unsigned workers = hp.threads > 0 ? static_cast<unsigned>(hp.threads) : std::thread::hardware_concurrency();
  workers = std::clamp(workers, 1u, static_cast<unsigned>(hp.n_trees));

  std::atomic<int> next{0};
  auto work = [&] {
    TreeBuilder builder(index, labels, hp, mtry);
    for (int t = next++; t < hp.n_trees; t = next++) {
      trees[static_cast<std::size_t>(t)] = builder.build(derive_seed(hp.seed, {static_cast<std::uint64_t>(t)}));
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < workers; ++i) pool.emplace_back(work);
  }
  return trees;
}

}  // namespace noshow
