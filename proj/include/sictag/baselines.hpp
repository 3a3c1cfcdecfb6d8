#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sictag/common.hpp"
#include "sictag/dsp.hpp"
#include "sictag/track_model.hpp"

namespace sictag {

// ---------------------------------------------------------------------------
// Constant and random predictors.

/// Every track gets `label`; margin is +/-1 toward that label.
inline std::vector<TrackPrediction> predict_all(std::span<const std::string> isrcs, Label label) {
  std::vector<TrackPrediction> out;
  out.reserve(isrcs.size());
  for (const auto& isrc : isrcs) out.push_back(prediction_from_margin(isrc, label == Label::Instrumental ? 1.0 : -1.0));
  return out;
}

/// Random classification: a seeded permutation sends the first ceil(n/2)
/// tracks to Song and the rest to Instrumental.
inline std::vector<TrackPrediction> predict_rca(std::span<const std::string> isrcs, std::uint64_t seed) {
  if (isrcs.empty()) throw Error(ErrorCode::EmptyInput, "RCA needs at least one track");
  std::vector<std::size_t> order(isrcs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, "rca"));
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_song = (isrcs.size() + 1) / 2;
  std::vector<TrackPrediction> out(isrcs.size());
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const std::size_t i = order[rank];
    out[i] = prediction_from_margin(isrcs[i], rank < n_song ? -1.0 : 1.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// GA: track-level mean MFCC, RANSAC-fitted hyperplane, sign decision.

inline std::vector<double> track_mean_mfcc(const Matrix& frames, std::size_t n_coeffs = kMfccDim) {
  if (frames.rows == 0 || frames.cols < n_coeffs) throw Error(ErrorCode::EmptyInput, "no MFCC frames to average");
  std::vector<double> mean(n_coeffs, 0.0);
  for (std::size_t r = 0; r < frames.rows; ++r)
    for (std::size_t c = 0; c < n_coeffs; ++c) mean[c] += frames(r, c);
  for (double& m : mean) m /= static_cast<double>(frames.rows);
  return mean;
}

struct GaConfig {
  std::size_t iterations = 100;
  double inlier_threshold = 0.5;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    return {{"iterations", iterations}, {"inlier_threshold", inlier_threshold}, {"seed", seed}};
  }
  static GaConfig from_json(const nlohmann::json& j) {
    return {j.at("iterations").get<std::size_t>(), j.at("inlier_threshold").get<double>(), j.at("seed").get<std::uint64_t>()};
  }
};

inline constexpr std::string_view kGaModelSchema = "ga_model/1";

struct RansacModel {
  /// Weights then bias; score(x) = w . x + b.
  std::vector<double> hyperplane;
  double inlier_threshold = 0.5;
  std::size_t iterations = 0;
  std::uint64_t seed = 0;
  /// Training rows in the final consensus set.
  std::vector<std::size_t> consensus;
  std::string config_hash;

  std::size_t dim() const { return hyperplane.size() - 1; }

  double score(std::span<const double> x) const {
    if (x.size() != dim()) throw Error(ErrorCode::DimensionMismatch, "GA feature has wrong dimension");
    double s = hyperplane.back();
    for (std::size_t i = 0; i < x.size(); ++i) s += hyperplane[i] * x[i];
    return s;
  }

  nlohmann::json to_json() const {
    return {{"schema", kGaModelSchema},     {"hyperplane", hyperplane}, {"inlier_threshold", inlier_threshold},
            {"iterations", iterations},     {"seed", seed},             {"consensus_size", consensus.size()},
            {"config_hash", config_hash}};
  }
  static RansacModel from_json(const nlohmann::json& j) {
    const auto schema = j.value("schema", std::string{});
    if (schema != kGaModelSchema)
      throw Error(ErrorCode::SchemaMismatch, "expected schema " + std::string(kGaModelSchema) + ", found '" + schema + "'");
    RansacModel m;
    m.hyperplane = j.at("hyperplane").get<std::vector<double>>();
    m.inlier_threshold = j.at("inlier_threshold").get<double>();
    m.iterations = j.at("iterations").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config_hash = j.value("config_hash", std::string{});
    if (m.hyperplane.size() < 2) throw Error(ErrorCode::Parse, "GA hyperplane too short");
    for (double v : m.hyperplane)
      if (!std::isfinite(v)) throw Error(ErrorCode::Parse, "non-finite GA weight");
    return m;
  }
};

namespace detail {

/// Minimum-norm least squares of [X 1] h = t over the given rows.
inline std::optional<std::vector<double>> fit_hyperplane(const std::vector<std::vector<double>>& x,
                                                         std::span<const double> targets,
                                                         std::span<const std::size_t> rows) {
  const std::size_t d = x.front().size();
  Eigen::MatrixXd a(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d + 1));
  Eigen::VectorXd b(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    for (std::size_t c = 0; c < d; ++c) a(ri, static_cast<Eigen::Index>(c)) = x[rows[r]][c];
    a(ri, static_cast<Eigen::Index>(d)) = 1.0;
    b(ri) = targets[rows[r]];
  }
  const Eigen::VectorXd h = a.completeOrthogonalDecomposition().solve(b);
  if (!h.allFinite()) return std::nullopt;
  return std::vector<double>(h.data(), h.data() + h.size());
}

}  // namespace detail

/// RANSAC over track vectors. Targets: Song = -1, Instrumental = +1. Each
/// iteration least-squares fits d+1 random tracks; a sample holding only one
/// class is degenerate and is redrawn against the same iteration budget.
inline RansacModel train_ga(const std::vector<std::vector<double>>& features, std::span<const Label> labels,
                            const GaConfig& cfg) {
  if (features.empty()) throw Error(ErrorCode::EmptyInput, "empty GA training set");
  if (features.size() != labels.size()) throw Error(ErrorCode::DimensionMismatch, "features and labels differ in length");
  const std::size_t d = features.front().size();
  for (const auto& f : features)
    if (f.size() != d) throw Error(ErrorCode::DimensionMismatch, "GA features differ in length");
  std::vector<double> targets(features.size());
  std::size_t n_instr = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    targets[i] = labels[i] == Label::Instrumental ? 1.0 : -1.0;
    n_instr += labels[i] == Label::Instrumental;
  }
  if (n_instr == 0 || n_instr == labels.size()) throw Error(ErrorCode::SingleClass, "single-class training set");
  const std::size_t sample_size = std::min(d + 1, features.size());

  std::mt19937_64 rng(derive_seed(cfg.seed, "ransac"));
  std::vector<std::size_t> pool(features.size());
  std::iota(pool.begin(), pool.end(), std::size_t{0});

  auto inliers_of = [&](const std::vector<double>& h) {
    RansacModel probe;
    probe.hyperplane = h;
    std::vector<std::size_t> in;
    for (std::size_t i = 0; i < features.size(); ++i)
      if (std::abs(probe.score(features[i]) - targets[i]) < cfg.inlier_threshold) in.push_back(i);
    return in;
  };

  std::vector<std::size_t> best;
  bool found = false;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    // partial Fisher-Yates for the sample
    for (std::size_t i = 0; i < sample_size; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    std::vector<std::size_t> sample(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(sample_size));
    std::sort(sample.begin(), sample.end());
    const auto instr = std::count_if(sample.begin(), sample.end(), [&](std::size_t i) { return targets[i] > 0; });
    if (instr == 0 || static_cast<std::size_t>(instr) == sample.size()) continue;
    const auto h = detail::fit_hyperplane(features, targets, sample);
    if (!h) continue;
    auto in = inliers_of(*h);
    if (!found || in.size() > best.size()) {
      best = std::move(in);
      found = true;
    }
  }
  if (!found) throw Error(ErrorCode::Degenerate, "every RANSAC sample was degenerate");
  if (best.empty()) best = pool;  // no point within threshold: fall back to all rows

  const auto h = detail::fit_hyperplane(features, targets, best);
  if (!h) throw Error(ErrorCode::Degenerate, "consensus refit produced a non-finite hyperplane");
  RansacModel model;
  model.hyperplane = *h;
  model.inlier_threshold = cfg.inlier_threshold;
  model.iterations = cfg.iterations;
  model.seed = cfg.seed;
  model.consensus = std::move(best);
  std::sort(model.consensus.begin(), model.consensus.end());
  return model;
}

inline TrackPrediction predict_ga(const RansacModel& model, std::span<const double> feature, std::string isrc = {}) {
  return prediction_from_margin(std::move(isrc), model.score(feature));
}

// ---------------------------------------------------------------------------
// VQMM: k-means codebook over frame MFCCs, one first-order Markov chain per class.

struct VqmmConfig {
  std::size_t k = 128;
  std::size_t kmeans_iters = 50;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const { return {{"k", k}, {"kmeans_iters", kmeans_iters}, {"seed", seed}}; }
  static VqmmConfig from_json(const nlohmann::json& j) {
    return {j.at("k").get<std::size_t>(), j.at("kmeans_iters").get<std::size_t>(), j.at("seed").get<std::uint64_t>()};
  }
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

/// Nearest centroid by Euclidean distance; ties go to the lowest index.
inline std::uint32_t nearest_codeword(const Matrix& codebook, std::span<const double> x) {
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < codebook.rows; ++c) {
    const double dist = squared_distance(codebook.row(c), x);
    if (dist < best_d) {
      best_d = dist;
      best = static_cast<std::uint32_t>(c);
    }
  }
  return best;
}

inline std::vector<std::uint32_t> quantize(const Matrix& codebook, const Matrix& frames) {
  if (frames.cols != codebook.cols) throw Error(ErrorCode::DimensionMismatch, "frame dimension differs from codebook");
  std::vector<std::uint32_t> codes(frames.rows);
  for (std::size_t r = 0; r < frames.rows; ++r) codes[r] = nearest_codeword(codebook, frames.row(r));
  return codes;
}

/// Lloyd's k-means with k-means++ seeding. An emptied cluster is reseeded
/// with the point farthest from its current centroid.
inline Matrix kmeans(const Matrix& data, std::size_t k, std::size_t iterations, std::uint64_t seed, unsigned jobs = 1) {
  if (k == 0) throw Error(ErrorCode::Invalid, "k must be positive");
  if (data.rows < k)
    throw Error(ErrorCode::InsufficientData, "k-means needs at least k=" + std::to_string(k) + " points, got " +
                                                 std::to_string(data.rows));
  const std::size_t n = data.rows, d = data.cols;
  std::mt19937_64 rng(derive_seed(seed, "kmeans"));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Matrix centres(k, d);
  std::vector<double> dist(n);
  {
    const auto first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    std::copy_n(data.row(first).begin(), d, centres.row(0).begin());
    for (std::size_t i = 0; i < n; ++i) dist[i] = squared_distance(data.row(i), centres.row(0));
    for (std::size_t c = 1; c < k; ++c) {
      const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
      std::size_t pick = 0;
      if (total > 0.0) {
        const double target = unit(rng) * total;
        double acc = 0.0;
        pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
          acc += dist[i];
          if (acc > target) {
            pick = i;
            break;
          }
        }
      } else {
        pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
      }
      std::copy_n(data.row(pick).begin(), d, centres.row(c).begin());
      for (std::size_t i = 0; i < n; ++i) dist[i] = std::min(dist[i], squared_distance(data.row(i), centres.row(c)));
    }
  }

  std::vector<std::uint32_t> assign(n, std::numeric_limits<std::uint32_t>::max());
  std::vector<std::uint32_t> next(n);
  for (std::size_t it = 0; it < iterations; ++it) {
    const std::size_t chunks = std::max<std::size_t>(1, jobs);
    parallel_for(chunks, jobs, [&](std::size_t w) {
      for (std::size_t i = w; i < n; i += chunks) {
        next[i] = nearest_codeword(centres, data.row(i));
        dist[i] = squared_distance(data.row(i), centres.row(next[i]));
      }
    });
    if (next == assign) break;
    assign = next;

    Matrix sums(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      auto s = sums.row(assign[i]);
      const auto x = data.row(i);
      for (std::size_t j = 0; j < d; ++j) s[j] += x[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
        std::copy_n(data.row(far).begin(), d, centres.row(c).begin());
        dist[far] = 0.0;
        assign[far] = static_cast<std::uint32_t>(c);
        continue;
      }
      auto centre = centres.row(c);
      const auto s = sums.row(c);
      for (std::size_t j = 0; j < d; ++j) centre[j] = s[j] / static_cast<double>(counts[c]);
    }
  }
  return centres;
}

/// Add-one smoothed first-order chain over k symbols.
struct MarkovChain {
  std::size_t k = 0;
  std::vector<double> initial;     // k
  std::vector<double> transition;  // k x k, row-major, rows sum to 1

  double log_likelihood(std::span<const std::uint32_t> seq) const {
    if (seq.empty()) return 0.0;
    double ll = std::log(initial.at(seq[0]));
    for (std::size_t i = 1; i < seq.size(); ++i) ll += std::log(transition.at(seq[i - 1] * k + seq[i]));
    return ll;
  }
};

inline MarkovChain fit_markov(const std::vector<std::vector<std::uint32_t>>& sequences, std::size_t k) {
  MarkovChain chain;
  chain.k = k;
  std::vector<double> start(k, 1.0), trans(k * k, 1.0);
  for (const auto& seq : sequences) {
    if (seq.empty()) continue;
    start.at(seq[0]) += 1.0;
    for (std::size_t i = 1; i < seq.size(); ++i) trans.at(seq[i - 1] * k + seq[i]) += 1.0;
  }
  const double start_total = std::accumulate(start.begin(), start.end(), 0.0);
  chain.initial.resize(k);
  for (std::size_t c = 0; c < k; ++c) chain.initial[c] = start[c] / start_total;
  chain.transition.resize(k * k);
  for (std::size_t a = 0; a < k; ++a) {
    double row = 0.0;
    for (std::size_t b = 0; b < k; ++b) row += trans[a * k + b];
    for (std::size_t b = 0; b < k; ++b) chain.transition[a * k + b] = trans[a * k + b] / row;
  }
  return chain;
}

inline constexpr std::string_view kVqmmModelSchema = "vqmm_model/1";

struct VqmmModel {
  Matrix codebook;
  MarkovChain song;
  MarkovChain instrumental;
  VqmmConfig config;
  std::string config_hash;

  /// log P(seq | Instrumental) - log P(seq | Song).
  double margin(std::span<const std::uint32_t> codes) const {
    return instrumental.log_likelihood(codes) - song.log_likelihood(codes);
  }

  nlohmann::json to_json() const {
    auto chain_json = [](const MarkovChain& c) { return nlohmann::json{{"initial", c.initial}, {"transition", c.transition}}; };
    return {{"schema", kVqmmModelSchema},
            {"config", config.to_json()},
            {"k", codebook.rows},
            {"dim", codebook.cols},
            {"codebook", codebook.data},
            {"song", chain_json(song)},
            {"instrumental", chain_json(instrumental)},
            {"config_hash", config_hash}};
  }

  static VqmmModel from_json(const nlohmann::json& j) {
    const auto schema = j.value("schema", std::string{});
    if (schema != kVqmmModelSchema)
      throw Error(ErrorCode::SchemaMismatch, "expected schema " + std::string(kVqmmModelSchema) + ", found '" + schema + "'");
    VqmmModel m;
    m.config = VqmmConfig::from_json(j.at("config"));
    m.config_hash = j.value("config_hash", std::string{});
    const auto k = j.at("k").get<std::size_t>(), dim = j.at("dim").get<std::size_t>();
    m.codebook = Matrix(k, dim);
    m.codebook.data = j.at("codebook").get<std::vector<double>>();
    if (m.codebook.data.size() != k * dim) throw Error(ErrorCode::Parse, "codebook size mismatch");
    auto chain = [&](const nlohmann::json& c) {
      MarkovChain mc;
      mc.k = k;
      mc.initial = c.at("initial").get<std::vector<double>>();
      mc.transition = c.at("transition").get<std::vector<double>>();
      if (mc.initial.size() != k || mc.transition.size() != k * k) throw Error(ErrorCode::Parse, "markov chain size mismatch");
      return mc;
    };
    m.song = chain(j.at("song"));
    m.instrumental = chain(j.at("instrumental"));
    return m;
  }
};

/// Only the first kMfccDim columns of each matrix are used (no deltas).
inline Matrix mfcc_columns(const Matrix& frames) {
  if (frames.cols < kMfccDim) throw Error(ErrorCode::DimensionMismatch, "need at least 13 MFCC columns");
  if (frames.cols == kMfccDim) return frames;
  Matrix out(frames.rows, kMfccDim);
  for (std::size_t r = 0; r < frames.rows; ++r) std::copy_n(frames.row(r).begin(), kMfccDim, out.row(r).begin());
  return out;
}

inline VqmmModel train_vqmm(const std::vector<Matrix>& tracks, std::span<const Label> labels, const VqmmConfig& cfg,
                            unsigned jobs = 1) {
  if (tracks.empty()) throw Error(ErrorCode::EmptyInput, "empty VQMM training set");
  if (tracks.size() != labels.size()) throw Error(ErrorCode::DimensionMismatch, "tracks and labels differ in length");
  const auto n_instr = std::count(labels.begin(), labels.end(), Label::Instrumental);
  if (n_instr == 0 || static_cast<std::size_t>(n_instr) == labels.size())
    throw Error(ErrorCode::SingleClass, "single-class training set");

  std::size_t total = 0;
  for (const auto& t : tracks) {
    if (t.rows < 2) throw Error(ErrorCode::TooShort, "VQMM needs at least 2 frames per track");
    total += t.rows;
  }
  Matrix pooled(total, kMfccDim);
  std::size_t r = 0;
  for (const auto& t : tracks)
    for (std::size_t i = 0; i < t.rows; ++i, ++r) std::copy_n(t.row(i).begin(), kMfccDim, pooled.row(r).begin());

  VqmmModel model;
  model.config = cfg;
  model.codebook = kmeans(pooled, cfg.k, cfg.kmeans_iters, cfg.seed, jobs);
  std::vector<std::vector<std::uint32_t>> song_seqs, instr_seqs;
  for (std::size_t i = 0; i < tracks.size(); ++i)
    (labels[i] == Label::Instrumental ? instr_seqs : song_seqs).push_back(quantize(model.codebook, mfcc_columns(tracks[i])));
  model.song = fit_markov(song_seqs, cfg.k);
  model.instrumental = fit_markov(instr_seqs, cfg.k);
  return model;
}

inline TrackPrediction predict_vqmm(const VqmmModel& model, const Matrix& frames, std::string isrc = {}) {
  return prediction_from_margin(std::move(isrc), model.margin(quantize(model.codebook, mfcc_columns(frames))));
}

}  // namespace sictag
