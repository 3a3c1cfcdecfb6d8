#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "sictag/playlist.hpp"
#include "test_util.hpp"

using namespace sictag;

namespace {

std::vector<TrackPrediction> random_predictions(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<TrackPrediction> out;
  for (std::size_t i = 0; i < n; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "ZZRND%07zu", i);
    // coarse margins so ties occur
    out.push_back(prediction_from_margin(buf, std::round(g(rng) * 8.0) / 8.0));
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

}  // namespace

TEST(Playlist, TopMarginsUnderCap) {
  std::vector<TrackPrediction> p;
  const double m[] = {0.9, 0.1, 0.5, 0.3, 0.7};
  for (int i = 0; i < 5; ++i) p.push_back(prediction_from_margin("ZZTST000000" + std::to_string(i), m[i]));
  const auto pl = generate_playlist(p, Label::Instrumental, 3);
  EXPECT_EQ(pl.entries, (std::vector<std::string>{"ZZTST0000000", "ZZTST0000004", "ZZTST0000002"}));
  EXPECT_EQ(pl.cap, 3u);
}

TEST(Playlist, NoMatchingPredictionsGivesEmptyList) {
  std::vector<TrackPrediction> p{prediction_from_margin("A", -0.4), prediction_from_margin("B", 0.0)};
  EXPECT_TRUE(generate_playlist(p, Label::Instrumental).entries.empty());
  // the tie at zero is a Song, and its margin toward Song is not above 0
  EXPECT_EQ(generate_playlist(p, Label::Song).entries, (std::vector<std::string>{"A"}));
}

TEST(Playlist, DefaultCapIsOneThousand) {
  std::mt19937_64 rng(1);
  std::vector<TrackPrediction> p;
  for (int i = 0; i < 2500; ++i) p.push_back(prediction_from_margin("ZZ" + std::to_string(100000 + i), 0.01 + (rng() % 1000) / 100.0));
  const auto pl = generate_playlist(p, Label::Instrumental);
  EXPECT_EQ(pl.cap, kDefaultPlaylistCap);
  EXPECT_EQ(pl.entries.size(), 1000u);
  EXPECT_EQ(generate_playlist(p, Label::Instrumental, 5000).entries.size(), 2500u);
}

TEST(Playlist, CapZeroIsAnError) {
  try {
    generate_playlist({}, Label::Instrumental, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Invalid);
  }
}

TEST(Playlist, RaisingMinMarginGivesPrefix) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto preds = random_predictions(rng, 1 + rng() % 300);
    const Label tag = trial % 2 ? Label::Instrumental : Label::Song;
    const std::size_t cap = 1 + rng() % 400;
    const auto base = generate_playlist(preds, tag, cap);
    double prev = 0.0;
    std::size_t prev_len = base.entries.size();
    for (int step = 0; step < 5; ++step) {
      const double mm = prev + std::uniform_real_distribution<double>(0.0, 0.8)(rng);
      const auto pl = generate_playlist(preds, tag, cap, mm);
      ASSERT_LE(pl.entries.size(), prev_len);
      ASSERT_LE(pl.entries.size(), cap);
      ASSERT_TRUE(std::equal(pl.entries.begin(), pl.entries.end(), base.entries.begin()));
      prev = mm;
      prev_len = pl.entries.size();
    }
  }
}

TEST(Playlist, DeterministicOrderWithTies) {
  std::mt19937_64 rng(3);
  auto preds = random_predictions(rng, 200);
  const auto a = generate_playlist(preds, Label::Instrumental, 1000);
  std::shuffle(preds.begin(), preds.end(), rng);
  const auto b = generate_playlist(preds, Label::Instrumental, 1000);
  EXPECT_EQ(a.entries, b.entries);
  for (std::size_t i = 1; i < a.entries.size(); ++i) {
    auto find = [&](const std::string& id) {
      return std::find_if(preds.begin(), preds.end(), [&](const auto& p) { return p.isrc == id; })->margin;
    };
    const double m0 = find(a.entries[i - 1]), m1 = find(a.entries[i]);
    ASSERT_TRUE(m0 > m1 || (m0 == m1 && a.entries[i - 1] < a.entries[i]));
  }
}

TEST(Playlist, FileFormat) {
  Playlist pl;
  pl.entries = {"ZZTST0000001", "ZZTST0000002"};
  EXPECT_EQ(format_playlist(pl), "# tag=instrumental cap=1000\nZZTST0000001\nZZTST0000002\n");
  pl.tag = Label::Song;
  pl.cap = 5;
  pl.entries.clear();
  EXPECT_EQ(format_playlist(pl), "# tag=song cap=5\n");
  sictag::testing::TempDir dir;
  write_playlist(pl, dir / "p.txt");
  EXPECT_TRUE(std::filesystem::exists(dir / "p.txt"));
}
