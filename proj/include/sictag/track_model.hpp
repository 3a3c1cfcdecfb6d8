#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sictag/aggregate.hpp"
#include "sictag/common.hpp"
#include "sictag/decision_tree.hpp"

namespace sictag {

struct BoostConfig {
  std::size_t n_rounds = 200;
  std::size_t tree_depth = 2;
  double weight_song = 1.0;
  double weight_instrumental = 1.0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    return {{"n_rounds", n_rounds}, {"tree_depth", tree_depth}, {"weight_song", weight_song},
            {"weight_instrumental", weight_instrumental}, {"seed", seed}};
  }
  static BoostConfig from_json(const nlohmann::json& j) {
    BoostConfig c;
    c.n_rounds = j.at("n_rounds").get<std::size_t>();
    c.tree_depth = j.at("tree_depth").get<std::size_t>();
    c.weight_song = j.at("weight_song").get<double>();
    c.weight_instrumental = j.at("weight_instrumental").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
  }
};

inline constexpr double kMaxAlpha = 10.0;

/// Outcome of one reweighting step.
struct RoundUpdate {
  double error = 0.0;
  double alpha = 0.0;
};

/// One discrete AdaBoost step on normalised weights: e = weight of the
/// misclassified samples, alpha = 0.5 ln((1 - e) / e) capped at kMaxAlpha,
/// misclassified weights times exp(alpha), the rest times exp(-alpha), then
/// renormalise. Weights are left untouched when e >= 0.5 or e == 0.
inline RoundUpdate boost_reweight(std::span<double> weights, std::span<const std::uint8_t> correct) {
  if (weights.size() != correct.size()) throw Error(ErrorCode::DimensionMismatch, "weights and outcomes differ in length");
  double total = 0.0, err = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    total += weights[i];
    if (!correct[i]) err += weights[i];
  }
  RoundUpdate u;
  u.error = total > 0.0 ? err / total : 0.0;
  if (u.error <= 0.0) {
    u.error = 0.0;
    u.alpha = kMaxAlpha;
    return u;
  }
  if (u.error >= 0.5) return u;
  u.alpha = std::min(0.5 * std::log((1.0 - u.error) / u.error), kMaxAlpha);
  const double up = std::exp(u.alpha), down = std::exp(-u.alpha);
  double sum = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) sum += (weights[i] *= correct[i] ? down : up);
  for (double& w : weights) w /= sum;
  return u;
}

struct BoostRound {
  DecisionTree tree;
  double alpha = 0.0;
  double error = 0.0;

  /// +1 votes Instrumental, -1 votes Song. A leaf at exactly 0.5 votes Song.
  int vote(std::span<const double> x) const { return tree.predict(x) > 0.5 ? +1 : -1; }
};

inline constexpr std::string_view kTrackModelSchema = "track_model/1";

struct TrackPrediction {
  std::string isrc;
  Label predicted_label = Label::Song;
  double margin = 0.0;  // > 0 means Instrumental
  double score_song = 0.0;
  double score_instrumental = 0.0;
};

/// Builds a prediction from a signed margin; ties resolve to Song.
inline TrackPrediction prediction_from_margin(std::string isrc, double margin) {
  TrackPrediction p;
  p.isrc = std::move(isrc);
  p.margin = margin;
  p.predicted_label = margin > 0.0 ? Label::Instrumental : Label::Song;
  p.score_song = -margin;
  p.score_instrumental = margin;
  return p;
}

struct AdaBoostModel {
  std::vector<BoostRound> rounds;
  BoostConfig config;
  std::size_t n_features = kTrackFeatureDim;
  /// Frame probability threshold used to build the run-length histogram.
  double voiced_threshold = kDefaultVoicedThreshold;
  std::string dsp_fingerprint;
  std::string config_hash;

  double margin(std::span<const double> x) const {
    double m = 0.0;
    for (const auto& r : rounds) m += r.alpha * r.vote(x);
    return m;
  }

  nlohmann::json to_json() const {
    nlohmann::json rs = nlohmann::json::array();
    for (const auto& r : rounds) rs.push_back({{"alpha", r.alpha}, {"error", r.error}, {"tree", r.tree.to_json()}});
    return {{"schema", kTrackModelSchema},
            {"n_features", n_features},
            {"voiced_threshold", voiced_threshold},
            {"config", config.to_json()},
            {"class_weights", {{"song", config.weight_song}, {"instrumental", config.weight_instrumental}}},
            {"dsp_fingerprint", dsp_fingerprint},
            {"config_hash", config_hash},
            {"rounds", rs}};
  }

  static AdaBoostModel from_json(const nlohmann::json& j) {
    const auto schema = j.value("schema", std::string{});
    if (schema != kTrackModelSchema)
      throw Error(ErrorCode::SchemaMismatch, "expected schema " + std::string(kTrackModelSchema) + ", found '" + schema + "'");
    AdaBoostModel m;
    m.n_features = j.at("n_features").get<std::size_t>();
    m.voiced_threshold = j.at("voiced_threshold").get<double>();
    m.config = BoostConfig::from_json(j.at("config"));
    m.dsp_fingerprint = j.value("dsp_fingerprint", std::string{});
    m.config_hash = j.value("config_hash", std::string{});
    for (const auto& r : j.at("rounds")) {
      BoostRound round;
      round.alpha = r.at("alpha").get<double>();
      round.error = r.at("error").get<double>();
      round.tree = DecisionTree::from_json(r.at("tree"));
      if (!std::isfinite(round.alpha)) throw Error(ErrorCode::Parse, "non-finite alpha");
      m.rounds.push_back(std::move(round));
    }
    if (m.rounds.empty()) throw Error(ErrorCode::Parse, "track model has no rounds");
    return m;
  }
};

/// Called after each kept round with the renormalised sample weights.
using BoostObserver = std::function<void(std::size_t round, const BoostRound&, std::span<const double> weights)>;

/// Discrete two-class AdaBoost. Row i of `vectors` has label labels[i].
inline AdaBoostModel train_adaboost(const std::vector<std::vector<double>>& vectors, std::span<const Label> labels,
                                    const BoostConfig& cfg, const BoostObserver& observer = {}) {
  if (vectors.empty()) throw Error(ErrorCode::EmptyInput, "empty track training set");
  if (vectors.size() != labels.size()) throw Error(ErrorCode::DimensionMismatch, "vectors and labels differ in length");
  if (cfg.n_rounds == 0) throw Error(ErrorCode::Invalid, "n_rounds must be positive");
  if (!(cfg.weight_song > 0.0 && cfg.weight_instrumental > 0.0))
    throw Error(ErrorCode::Invalid, "class weights must be positive");
  const std::size_t d = vectors.front().size();
  const std::size_t n = vectors.size();
  std::vector<double> x;
  x.reserve(n * d);
  std::vector<std::uint8_t> y(n);
  std::size_t n_instr = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (vectors[i].size() != d) throw Error(ErrorCode::DimensionMismatch, "track vectors differ in length");
    x.insert(x.end(), vectors[i].begin(), vectors[i].end());
    y[i] = labels[i] == Label::Instrumental ? 1 : 0;
    n_instr += y[i];
  }
  if (n_instr == 0 || n_instr == n) throw Error(ErrorCode::SingleClass, "single-class training set");

  std::vector<double> w(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += (w[i] = y[i] ? cfg.weight_instrumental : cfg.weight_song);
  for (double& v : w) v /= total;

  AdaBoostModel model;
  model.config = cfg;
  model.n_features = d;
  TreeConfig tree_cfg;
  tree_cfg.max_depth = cfg.tree_depth;
  tree_cfg.min_leaf = 1;
  tree_cfg.max_features = 0;
  std::mt19937_64 rng(derive_seed(cfg.seed, "adaboost"));
  std::vector<std::uint32_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = static_cast<std::uint32_t>(i);
  std::vector<std::uint8_t> correct(n);

  for (std::size_t r = 0; r < cfg.n_rounds; ++r) {
    const TrainingView view{x, d, y, w};
    BoostRound round;
    round.tree = fit_tree(view, all, tree_cfg, rng);
    for (std::size_t i = 0; i < n; ++i) {
      const int vote = round.vote(std::span<const double>(x.data() + i * d, d));
      correct[i] = (vote > 0) == (y[i] == 1);
    }
    const RoundUpdate u = boost_reweight(w, correct);
    round.error = u.error;
    if (u.error >= 0.5) break;
    round.alpha = u.alpha;
    model.rounds.push_back(std::move(round));
    if (observer) observer(r, model.rounds.back(), w);
    if (u.error == 0.0) break;
  }
  if (model.rounds.empty())
    throw Error(ErrorCode::Degenerate, "no base tree reached weighted error below 0.5");
  return model;
}

inline TrackPrediction predict_track(const AdaBoostModel& model, std::span<const double> vector, std::string isrc = {}) {
  if (vector.size() != model.n_features)
    throw Error(ErrorCode::DimensionMismatch, "track vector has " + std::to_string(vector.size()) +
                                                  " entries, model expects " + std::to_string(model.n_features));
  return prediction_from_margin(std::move(isrc), model.margin(vector));
}

}  // namespace sictag
