#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "sictag/common.hpp"
#include "sictag/dsp.hpp"
#include "sictag/frame_model.hpp"

namespace sictag {

inline constexpr std::size_t kProbBins = 10;
inline constexpr std::size_t kNgramBins = 30;
inline constexpr std::size_t kTrackFeatureDim = kProbBins + kNgramBins + kFrameFeatureDim;
inline constexpr double kDefaultVoicedThreshold = 0.5;

/// Track descriptor: [probability histogram | run-length histogram | feature means].
struct TrackFeatureVector {
  std::array<double, kProbBins> prob_hist{};
  std::array<double, kNgramBins> ngram_hist{};
  std::array<double, kFrameFeatureDim> feature_means{};

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(kTrackFeatureDim);
    out.insert(out.end(), prob_hist.begin(), prob_hist.end());
    out.insert(out.end(), ngram_hist.begin(), ngram_hist.end());
    out.insert(out.end(), feature_means.begin(), feature_means.end());
    return out;
  }
};

/// 10 equal bins over [0, 1]; p = 1.0 lands in the last bin. Count-normalised.
inline std::array<double, kProbBins> probability_histogram(std::span<const double> pv) {
  if (pv.empty()) throw Error(ErrorCode::EmptyInput, "probability histogram of an empty vector");
  std::array<std::size_t, kProbBins> counts{};
  for (double p : pv) {
    const double clamped = std::clamp(p, 0.0, 1.0);
    const auto bin = std::min(static_cast<std::size_t>(clamped * static_cast<double>(kProbBins)), kProbBins - 1);
    ++counts[bin];
  }
  std::array<double, kProbBins> hist{};
  for (std::size_t b = 0; b < kProbBins; ++b)
    hist[b] = static_cast<double>(counts[b]) / static_cast<double>(pv.size());
  return hist;
}

/// Lengths of maximal runs with p >= threshold, in order of occurrence.
inline std::vector<std::size_t> voiced_runs(std::span<const double> pv, double threshold = kDefaultVoicedThreshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw Error(ErrorCode::Invalid, "threshold must lie in (0, 1)");
  std::vector<std::size_t> runs;
  std::size_t current = 0;
  for (double p : pv) {
    if (p >= threshold) {
      ++current;
    } else if (current) {
      runs.push_back(current);
      current = 0;
    }
  }
  if (current) runs.push_back(current);
  return runs;
}

/// Run length L goes to bin min(L, 30) - 1; normalised by run count.
/// No runs gives all zeros.
inline std::array<double, kNgramBins> ngram_histogram(std::span<const std::size_t> runs) {
  std::array<double, kNgramBins> hist{};
  if (runs.empty()) return hist;
  std::array<std::size_t, kNgramBins> counts{};
  for (std::size_t len : runs) {
    if (len == 0) throw Error(ErrorCode::Invalid, "zero-length run");
    ++counts[std::min(len, kNgramBins) - 1];
  }
  for (std::size_t b = 0; b < kNgramBins; ++b)
    hist[b] = static_cast<double>(counts[b]) / static_cast<double>(runs.size());
  return hist;
}

inline TrackFeatureVector build_track_vector(std::span<const double> pv, const FeatureMatrix& fm,
                                             double threshold = kDefaultVoicedThreshold) {
  if (pv.size() != fm.rows())
    throw Error(ErrorCode::DimensionMismatch, "probability vector has " + std::to_string(pv.size()) +
                                                  " frames, feature matrix " + std::to_string(fm.rows()));
  if (fm.cols() != kFrameFeatureDim)
    throw Error(ErrorCode::DimensionMismatch, "feature matrix must have " + std::to_string(kFrameFeatureDim) + " columns");
  TrackFeatureVector v;
  v.prob_hist = probability_histogram(pv);
  const auto runs = voiced_runs(pv, threshold);
  v.ngram_hist = ngram_histogram(runs);
  for (std::size_t r = 0; r < fm.rows(); ++r) {
    const auto row = fm.values.row(r);
    for (std::size_t c = 0; c < kFrameFeatureDim; ++c) v.feature_means[c] += row[c];
  }
  for (double& m : v.feature_means) m /= static_cast<double>(fm.rows());
  return v;
}

}  // namespace sictag
