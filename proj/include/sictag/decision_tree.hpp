#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include <json.hpp>

#include "sictag/common.hpp"

namespace sictag {

/// Binary classification tree node. Leaves have feature == -1; every node
/// stores the weighted fraction of positive samples that reached it.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;  // x[feature] <= threshold goes left
  int left = -1;
  int right = -1;
  double value = 0.0;

  bool is_leaf() const { return feature < 0; }
};

class DecisionTree {
 public:
  DecisionTree() = default;
  explicit DecisionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  bool empty() const { return nodes_.empty(); }

  /// Positive fraction of the leaf reached by x.
  double predict(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes_[i].is_leaf()) {
      const auto& n = nodes_[i];
      i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return nodes_[i].value;
  }

  std::size_t depth() const { return nodes_.empty() ? 0 : depth_from(0); }

  int max_feature_index() const {
    int m = -1;
    for (const auto& n : nodes_) m = std::max(m, n.feature);
    return m;
  }

  nlohmann::json to_json() const {
    nlohmann::json feature = nlohmann::json::array(), threshold = nlohmann::json::array(),
                   left = nlohmann::json::array(), right = nlohmann::json::array(), value = nlohmann::json::array();
    for (const auto& n : nodes_) {
      feature.push_back(n.feature);
      threshold.push_back(n.threshold);
      left.push_back(n.left);
      right.push_back(n.right);
      value.push_back(n.value);
    }
    return {{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right}, {"value", value}};
  }

  static DecisionTree from_json(const nlohmann::json& j) {
    const auto& f = j.at("feature");
    const std::size_t n = f.size();
    if (j.at("threshold").size() != n || j.at("left").size() != n || j.at("right").size() != n ||
        j.at("value").size() != n || n == 0)
      throw Error(ErrorCode::Parse, "tree arrays have inconsistent lengths");
    std::vector<TreeNode> nodes(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto& node = nodes[i];
      node.feature = f[i].get<int>();
      node.threshold = j["threshold"][i].get<double>();
      node.left = j["left"][i].get<int>();
      node.right = j["right"][i].get<int>();
      node.value = j["value"][i].get<double>();
      if (!node.is_leaf()) {
        const auto bad = [&](int c) { return c <= static_cast<int>(i) || c >= static_cast<int>(n); };
        if (bad(node.left) || bad(node.right)) throw Error(ErrorCode::Parse, "tree child index out of range");
      }
      if (!(node.value >= 0.0 && node.value <= 1.0)) throw Error(ErrorCode::Parse, "leaf fraction outside [0,1]");
    }
    return DecisionTree(std::move(nodes));
  }

 private:
  std::size_t depth_from(std::size_t i) const {
    const auto& n = nodes_[i];
    if (n.is_leaf()) return 0;
    return 1 + std::max(depth_from(static_cast<std::size_t>(n.left)), depth_from(static_cast<std::size_t>(n.right)));
  }

  std::vector<TreeNode> nodes_;
};

struct TreeConfig {
  std::size_t max_depth = 12;
  std::size_t min_leaf = 1;
  /// Features examined per split; 0 means all of them.
  std::size_t max_features = 0;
};

/// Dense training data, row-major. Weights may be empty (all ones).
struct TrainingView {
  std::span<const double> x;
  std::size_t n_features = 0;
  std::span<const std::uint8_t> y;
  std::span<const double> weight;

  std::size_t n_rows() const { return y.size(); }
  double value(std::size_t row, std::size_t f) const { return x[row * n_features + f]; }
  double w(std::size_t row) const { return weight.empty() ? 1.0 : weight[row]; }
};

namespace detail {

class TreeBuilder {
 public:
  TreeBuilder(const TrainingView& data, const TreeConfig& cfg, std::mt19937_64& rng)
      : data_(data), cfg_(cfg), rng_(rng) {
    features_.resize(data.n_features);
    std::iota(features_.begin(), features_.end(), std::size_t{0});
  }

  std::vector<TreeNode> build(std::vector<std::uint32_t> entries) {
    grow(entries, 0);
    return std::move(nodes_);
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double impurity = 0.0;
  };

  int grow(std::vector<std::uint32_t>& entries, std::size_t depth) {
    double w_total = 0.0, w_pos = 0.0;
    for (auto e : entries) {
      const double w = data_.w(e);
      w_total += w;
      if (data_.y[e]) w_pos += w;
    }
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    nodes_.back().value = w_total > 0.0 ? std::clamp(w_pos / w_total, 0.0, 1.0) : 0.0;

    const bool pure = w_pos <= 0.0 || w_pos >= w_total;
    if (pure || depth >= cfg_.max_depth || entries.size() < 2 * std::max<std::size_t>(cfg_.min_leaf, 1)) return id;

    const double parent = w_total * gini(w_pos, w_total);
    const Split best = find_split(entries);
    if (best.feature < 0 || !(best.impurity < parent - 1e-12 * w_total)) return id;

    std::vector<std::uint32_t> left, right;
    for (auto e : entries) {
      (data_.value(e, static_cast<std::size_t>(best.feature)) <= best.threshold ? left : right).push_back(e);
    }
    entries.clear();
    entries.shrink_to_fit();
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    nodes_[static_cast<std::size_t>(id)].feature = best.feature;
    nodes_[static_cast<std::size_t>(id)].threshold = best.threshold;
    nodes_[static_cast<std::size_t>(id)].left = l;
    nodes_[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  static double gini(double pos, double total) {
    if (total <= 0.0) return 0.0;
    const double p = pos / total;
    return 2.0 * p * (1.0 - p);
  }

  // Examines a random subset of max_features features, continuing through
  // the rest of the shuffled order only while no valid split has been found.
  // With every feature a candidate the scan is in index order, so equal
  // splits go to the lowest feature index.
  Split find_split(const std::vector<std::uint32_t>& entries) {
    const std::size_t d = features_.size();
    const std::size_t quota = cfg_.max_features == 0 ? d : std::min(cfg_.max_features, d);
    Split best;
    best.impurity = std::numeric_limits<double>::infinity();
    std::size_t examined = 0;
    for (std::size_t i = 0; i < d; ++i) {
      if (examined >= quota && best.feature >= 0) break;
      if (quota < d) {
        std::uniform_int_distribution<std::size_t> pick(i, d - 1);
        std::swap(features_[i], features_[pick(rng_)]);
      }
      ++examined;
      evaluate_feature(entries, features_[i], best);
    }
    return best;
  }

  void evaluate_feature(const std::vector<std::uint32_t>& entries, std::size_t f, Split& best) {
    const std::size_t n = entries.size();
    column_.resize(n);
    for (std::size_t i = 0; i < n; ++i) column_[i] = {data_.value(entries[i], f), entries[i]};
    std::sort(column_.begin(), column_.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    if (column_.front().first == column_.back().first) return;

    double w_total = 0.0, pos_total = 0.0;
    for (const auto& [v, e] : column_) {
      w_total += data_.w(e);
      if (data_.y[e]) pos_total += data_.w(e);
    }
    const std::size_t min_leaf = std::max<std::size_t>(cfg_.min_leaf, 1);
    double w_left = 0.0, pos_left = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const auto e = column_[i].second;
      w_left += data_.w(e);
      if (data_.y[e]) pos_left += data_.w(e);
      if (column_[i].first == column_[i + 1].first) continue;
      if (i + 1 < min_leaf || n - (i + 1) < min_leaf) continue;
      const double w_right = w_total - w_left;
      const double impurity = w_left * gini(pos_left, w_left) + w_right * gini(pos_total - pos_left, w_right);
      if (impurity < best.impurity) {
        double threshold = 0.5 * (column_[i].first + column_[i + 1].first);
        if (!(threshold < column_[i + 1].first)) threshold = column_[i].first;
        best = {static_cast<int>(f), threshold, impurity};
      }
    }
  }

  const TrainingView& data_;
  TreeConfig cfg_;
  std::mt19937_64& rng_;
  std::vector<std::size_t> features_;
  std::vector<std::pair<double, std::uint32_t>> column_;
  std::vector<TreeNode> nodes_;
};

}  // namespace detail

/// Grows a Gini tree on the given entries (row indices; repeats allowed, so a
/// bootstrap sample is just an index multiset).
inline DecisionTree fit_tree(const TrainingView& data, std::vector<std::uint32_t> entries, const TreeConfig& cfg,
                             std::mt19937_64& rng) {
  if (entries.empty()) throw Error(ErrorCode::EmptyInput, "cannot fit a tree on zero samples");
  if (data.x.size() != data.n_rows() * data.n_features)
    throw Error(ErrorCode::DimensionMismatch, "feature matrix size does not match label count");
  detail::TreeBuilder builder(data, cfg, rng);
  return DecisionTree(builder.build(std::move(entries)));
}

}  // namespace sictag
