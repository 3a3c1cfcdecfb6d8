#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sictag/common.hpp"
#include "sictag/corpus.hpp"
#include "sictag/decision_tree.hpp"
#include "sictag/dsp.hpp"

namespace sictag {

/// One flag per feature row; 1 = voiced.
using FrameLabels = std::vector<std::uint8_t>;

/// Per-frame singing-voice likelihood in [0, 1].
using ProbabilityVector = std::vector<double>;

/// A frame is voiced iff its centre lies in some half-open [start, end).
/// Instrumental tracks are unvoiced everywhere regardless of annotation.
inline FrameLabels align_labels(const VocalActivityAnnotation& ann, std::span<const double> frame_times_s,
                                Label track_label) {
  FrameLabels labels(frame_times_s.size(), 0);
  if (track_label == Label::Instrumental) return labels;
  std::size_t k = 0;
  const auto& iv = ann.intervals;
  for (std::size_t i = 0; i < frame_times_s.size(); ++i) {
    const double t = frame_times_s[i];
    while (k < iv.size() && iv[k].end_s <= t) ++k;
    labels[i] = (k < iv.size() && iv[k].start_s <= t && t < iv[k].end_s) ? 1 : 0;
  }
  return labels;
}

struct RfConfig {
  std::size_t n_trees = 100;
  std::size_t max_depth = 12;
  std::size_t min_leaf = 5;
  std::size_t max_features = 0;  // 0: ceil(sqrt(n_features))
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    return {{"n_trees", n_trees}, {"max_depth", max_depth}, {"min_leaf", min_leaf},
            {"max_features", max_features}, {"seed", seed}};
  }
  static RfConfig from_json(const nlohmann::json& j) {
    RfConfig c;
    c.n_trees = j.at("n_trees").get<std::size_t>();
    c.max_depth = j.at("max_depth").get<std::size_t>();
    c.min_leaf = j.at("min_leaf").get<std::size_t>();
    c.max_features = j.at("max_features").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  }
};

inline constexpr std::string_view kFrameModelSchema = "frame_model/1";

struct RandomForestModel {
  std::vector<DecisionTree> trees;
  std::size_t n_features = kFrameFeatureDim;
  RfConfig config;
  /// Fingerprint of the feature extraction the model was trained on.
  std::string dsp_fingerprint;
  /// Fingerprint of the full run configuration, for provenance.
  std::string config_hash;

  nlohmann::json to_json() const {
    nlohmann::json t = nlohmann::json::array();
    for (const auto& tree : trees) t.push_back(tree.to_json());
    return {{"schema", kFrameModelSchema}, {"n_features", n_features}, {"config", config.to_json()},
            {"dsp_fingerprint", dsp_fingerprint}, {"config_hash", config_hash}, {"trees", t}};
  }

  static RandomForestModel from_json(const nlohmann::json& j) {
    const auto schema = j.value("schema", std::string{});
    if (schema != kFrameModelSchema)
      throw Error(ErrorCode::SchemaMismatch, "expected schema " + std::string(kFrameModelSchema) + ", found '" + schema + "'");
    RandomForestModel m;
    m.n_features = j.at("n_features").get<std::size_t>();
    m.config = RfConfig::from_json(j.at("config"));
    m.dsp_fingerprint = j.value("dsp_fingerprint", std::string{});
    m.config_hash = j.value("config_hash", std::string{});
    for (const auto& t : j.at("trees")) m.trees.push_back(DecisionTree::from_json(t));
    if (m.trees.empty()) throw Error(ErrorCode::Parse, "frame model has no trees");
    for (const auto& t : m.trees)
      if (t.max_feature_index() >= static_cast<int>(m.n_features))
        throw Error(ErrorCode::Parse, "frame model tree references feature outside n_features");
    return m;
  }
};

namespace detail {

/// Row order sorted by (features, label). Training runs on this order, so
/// the model depends on the sample multiset and the seed, not on the order
/// the caller stacked tracks in.
inline std::vector<std::uint32_t> canonical_row_order(const Matrix& x, std::span<const std::uint8_t> y) {
  std::vector<std::uint32_t> order(x.rows);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    const auto ra = x.row(a), rb = x.row(b);
    for (std::size_t c = 0; c < x.cols; ++c)
      if (ra[c] != rb[c]) return ra[c] < rb[c];
    return y[a] < y[b];
  });
  return order;
}

}  // namespace detail

/// Random forest of Gini trees, each grown on a same-size bootstrap sample.
inline RandomForestModel train_frame_classifier(const Matrix& features, std::span<const std::uint8_t> labels,
                                                const RfConfig& cfg, unsigned jobs = 0) {
  if (features.rows == 0) throw Error(ErrorCode::EmptyInput, "empty frame training set");
  if (features.rows != labels.size())
    throw Error(ErrorCode::DimensionMismatch, "frame feature rows and labels differ in length");
  if (cfg.n_trees == 0) throw Error(ErrorCode::Invalid, "n_trees must be positive");
  const auto voiced = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
  if (voiced == 0 || voiced == labels.size())
    throw Error(ErrorCode::SingleClass, "single-class training set");

  const auto order = detail::canonical_row_order(features, labels);
  const std::size_t n = features.rows, d = features.cols;
  std::vector<double> x(n * d);
  std::vector<std::uint8_t> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(features.row(order[i]).begin(), d, x.begin() + static_cast<std::ptrdiff_t>(i * d));
    y[i] = labels[order[i]];
  }
  const TrainingView view{x, d, y, {}};

  TreeConfig tree_cfg;
  tree_cfg.max_depth = cfg.max_depth;
  tree_cfg.min_leaf = cfg.min_leaf;
  tree_cfg.max_features =
      cfg.max_features ? cfg.max_features : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d))));

  RandomForestModel model;
  model.n_features = d;
  model.config = cfg;
  model.trees.resize(cfg.n_trees);
  parallel_for(cfg.n_trees, jobs, [&](std::size_t t) {
    std::mt19937_64 rng(derive_seed(cfg.seed, "rf-tree", t));
    std::uniform_int_distribution<std::uint32_t> draw(0, static_cast<std::uint32_t>(n - 1));
    std::vector<std::uint32_t> bootstrap(n);
    for (auto& b : bootstrap) b = draw(rng);
    model.trees[t] = fit_tree(view, std::move(bootstrap), tree_cfg, rng);
  });
  return model;
}

/// Mean over trees of the reached leaf's voiced fraction.
inline ProbabilityVector predict_frame_probabilities(const RandomForestModel& model, const Matrix& features) {
  if (features.cols != model.n_features)
    throw Error(ErrorCode::DimensionMismatch, "frame features have " + std::to_string(features.cols) +
                                                  " columns, model expects " + std::to_string(model.n_features));
  if (model.trees.empty()) throw Error(ErrorCode::Invalid, "frame model has no trees");
  ProbabilityVector p(features.rows, 0.0);
  for (std::size_t r = 0; r < features.rows; ++r) {
    const auto row = features.row(r);
    double acc = 0.0;
    for (const auto& tree : model.trees) acc += tree.predict(row);
    p[r] = std::clamp(acc / static_cast<double>(model.trees.size()), 0.0, 1.0);
  }
  return p;
}

inline ProbabilityVector predict_frame_probabilities(const RandomForestModel& model, const FeatureMatrix& fm) {
  return predict_frame_probabilities(model, fm.values);
}

}  // namespace sictag
