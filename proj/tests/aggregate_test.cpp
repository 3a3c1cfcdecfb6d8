#include <algorithm>
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "sictag/aggregate.hpp"

using namespace sictag;

namespace {

// Naive two-pass oracles: binarise first, then scan.
std::vector<std::size_t> naive_runs(const std::vector<double>& pv, double thr) {
  std::vector<int> bits;
  for (double p : pv) bits.push_back(p >= thr ? 1 : 0);
  std::vector<std::size_t> runs;
  std::size_t i = 0;
  while (i < bits.size()) {
    if (!bits[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < bits.size() && bits[j]) ++j;
    runs.push_back(j - i);
    i = j;
  }
  return runs;
}

std::array<std::size_t, 10> naive_prob_counts(const std::vector<double>& pv) {
  std::array<std::size_t, 10> c{};
  for (double p : pv) {
    std::size_t b = 0;
    while (b < 9 && p >= double(b + 1) / 10.0) ++b;
    ++c[b];
  }
  return c;
}

std::array<std::size_t, 30> naive_ngram_counts(const std::vector<std::size_t>& runs) {
  std::array<std::size_t, 30> c{};
  for (std::size_t len : runs) ++c[len >= 30 ? 29 : len - 1];
  return c;
}

std::vector<double> random_pv(std::mt19937_64& rng) {
  const std::size_t n = 1 + rng() % 5000;
  std::vector<double> pv(n);
  // mix of smooth and jumpy vectors so long runs appear too
  const bool sticky = rng() % 2;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double p = u(rng);
  for (auto& v : pv) {
    if (!sticky || u(rng) < 0.05) p = u(rng);
    v = p;
  }
  if (rng() % 10 == 0) pv[rng() % n] = 1.0;
  return pv;
}

}  // namespace

TEST(ProbabilityHistogram, Examples) {
  const auto a = probability_histogram(std::vector<double>{0.0, 0.0, 0.0, 0.0});
  EXPECT_EQ(a[0], 1.0);
  for (std::size_t b = 1; b < 10; ++b) EXPECT_EQ(a[b], 0.0);

  const auto h = probability_histogram(std::vector<double>{0.05, 0.15, 0.95, 1.0});
  EXPECT_EQ(h[0], 0.25);
  EXPECT_EQ(h[1], 0.25);
  EXPECT_EQ(h[9], 0.5);
}

TEST(ProbabilityHistogram, UniformInputSpreadsEvenly) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> pv(1000);
    for (auto& v : pv) v = u(rng);
    for (double b : probability_histogram(pv)) EXPECT_NEAR(b, 0.1, 0.05);
  }
}

TEST(ProbabilityHistogram, EmptyIsAnError) {
  try {
    probability_histogram(std::vector<double>{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyInput);
  }
}

TEST(VoicedRuns, Examples) {
  EXPECT_EQ(voiced_runs(std::vector<double>{0.9, 0.9, 0.2, 0.8}), (std::vector<std::size_t>{2, 1}));
  EXPECT_TRUE(voiced_runs(std::vector<double>{0.1, 0.4, 0.49}).empty());
  EXPECT_EQ(voiced_runs(std::vector<double>{0.5}, 0.5), (std::vector<std::size_t>{1}));
  EXPECT_THROW(voiced_runs(std::vector<double>{0.5}, 1.0), Error);
  EXPECT_THROW(voiced_runs(std::vector<double>{0.5}, 0.0), Error);
}

TEST(NgramHistogram, Examples) {
  const auto a = ngram_histogram(std::vector<std::size_t>{2, 1});
  EXPECT_EQ(a[0], 0.5);
  EXPECT_EQ(a[1], 0.5);
  const auto b = ngram_histogram(std::vector<std::size_t>{35});
  EXPECT_EQ(b[29], 1.0);
  const auto c = ngram_histogram(std::vector<std::size_t>{30, 29});
  EXPECT_EQ(c[29], 0.5);
  EXPECT_EQ(c[28], 0.5);
  for (double v : ngram_histogram(std::vector<std::size_t>{})) EXPECT_EQ(v, 0.0);
}

TEST(TrackVector, AllZeroInput) {
  FeatureMatrix fm;
  fm.values = Matrix(12, kFrameFeatureDim);
  fm.frame_times_s.assign(12, 0.0);
  const auto v = build_track_vector(std::vector<double>(12, 0.0), fm).flatten();
  ASSERT_EQ(v.size(), 79u);
  EXPECT_EQ(v[0], 1.0);
  for (std::size_t i = 1; i < 79; ++i) EXPECT_EQ(v[i], 0.0);
}

TEST(TrackVector, LengthMismatchIsAnError) {
  FeatureMatrix fm;
  fm.values = Matrix(12, kFrameFeatureDim);
  try {
    build_track_vector(std::vector<double>(11, 0.0), fm);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST(TrackVector, MatchesComposedOracle) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g(0.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    auto pv = random_pv(rng);
    pv.resize(std::min<std::size_t>(pv.size(), 400));
    FeatureMatrix fm;
    fm.values = Matrix(pv.size(), kFrameFeatureDim);
    for (double& x : fm.values.data) x = g(rng);
    const auto v = build_track_vector(pv, fm).flatten();
    ASSERT_EQ(v.size(), kTrackFeatureDim);
    const auto pc = naive_prob_counts(pv);
    for (std::size_t b = 0; b < 10; ++b) EXPECT_NEAR(v[b], double(pc[b]) / double(pv.size()), 1e-12);
    const auto runs = naive_runs(pv, 0.5);
    const auto nc = naive_ngram_counts(runs);
    for (std::size_t b = 0; b < 30; ++b)
      EXPECT_NEAR(v[10 + b], runs.empty() ? 0.0 : double(nc[b]) / double(runs.size()), 1e-12);
    for (std::size_t c = 0; c < kFrameFeatureDim; ++c) {
      double s = 0.0;
      for (std::size_t r = 0; r < pv.size(); ++r) s += fm.values(r, c);
      EXPECT_NEAR(v[40 + c], s / double(pv.size()), 1e-9);
    }
  }
}

TEST(AggregateProperties, OracleEquivalenceOnRandomVectors) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto pv = random_pv(rng);
    const double thr = std::uniform_real_distribution<double>(0.05, 0.95)(rng);

    const auto runs = voiced_runs(pv, thr);
    ASSERT_EQ(runs, naive_runs(pv, thr));
    std::size_t sum = 0, voiced = 0;
    for (auto r : runs) sum += r;
    for (double p : pv) voiced += p >= thr;
    ASSERT_EQ(sum, voiced);

    const auto ph = probability_histogram(pv);
    const auto pc = naive_prob_counts(pv);
    double total = 0.0;
    for (std::size_t b = 0; b < 10; ++b) {
      ASSERT_EQ(std::llround(ph[b] * double(pv.size())), static_cast<long long>(pc[b]));
      ASSERT_NEAR(ph[b], double(pc[b]) / double(pv.size()), 1e-9);
      ASSERT_GE(ph[b], 0.0);
      total += ph[b];
    }
    ASSERT_NEAR(total, 1.0, 1e-9);

    const auto nh = ngram_histogram(runs);
    const auto nc = naive_ngram_counts(runs);
    double ntotal = 0.0;
    for (std::size_t b = 0; b < 30; ++b) {
      if (!runs.empty()) ASSERT_EQ(std::llround(nh[b] * double(runs.size())), static_cast<long long>(nc[b]));
      ASSERT_NEAR(nh[b], runs.empty() ? 0.0 : double(nc[b]) / double(runs.size()), 1e-9);
      ntotal += nh[b];
    }
    ASSERT_NEAR(ntotal, runs.empty() ? 0.0 : 1.0, 1e-9);
  }
}

TEST(AggregateProperties, ReversalKeepsNgramHistogram) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    auto pv = random_pv(rng);
    const auto fwd = voiced_runs(pv);
    std::reverse(pv.begin(), pv.end());
    auto back = voiced_runs(pv);
    std::reverse(back.begin(), back.end());
    ASSERT_EQ(fwd, back);
    ASSERT_EQ(ngram_histogram(fwd), ngram_histogram(voiced_runs(pv)));
  }
}
