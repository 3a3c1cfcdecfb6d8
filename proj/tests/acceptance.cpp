// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "sictag/pipeline.hpp"
#include "sictag/playlist.hpp"
#include "sictag/synth.hpp"

using namespace sictag;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

struct Block {
  std::vector<Label> truth, pred;
  void add(Label t, Label p, std::size_t n) {
    truth.insert(truth.end(), n, t);
    pred.insert(pred.end(), n, p);
  }
};

bool within(double rendered_value, double target, double tol) {
  return std::abs(std::stod(format3(rendered_value)) - target) <= tol + 1e-9;
}

fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("sictag_acceptance_" + name + "_" + std::to_string(std::random_device{}()));
  fs::remove_all(p);
  return p;
}

// ---------------------------------------------------------------------------

void ac1(Outcome& o) {
  // Song prevalence 0.889: AllSong, then RCA splitting each class in half.
  Block all_song;
  all_song.add(Label::Song, Label::Song, 889);
  all_song.add(Label::Instrumental, Label::Song, 111);
  const auto a = compute_metrics(all_song.truth, all_song.pred).of(Label::Song);
  o.require(within(a.precision, 0.889, 0.001) && within(a.recall, 1.000, 0.001) && within(a.fscore, 0.941, 0.001),
            "AllSong");

  Block rca_song;
  rca_song.add(Label::Song, Label::Song, 889);
  rca_song.add(Label::Song, Label::Instrumental, 889);
  rca_song.add(Label::Instrumental, Label::Song, 111);
  rca_song.add(Label::Instrumental, Label::Instrumental, 111);
  const auto b = compute_metrics(rca_song.truth, rca_song.pred).of(Label::Song);
  o.require(within(b.recall, 0.500, 0.001) && within(b.fscore, 0.640, 0.001), "RCA Song side");

  // Instrumental prevalence 0.110.
  Block all_instr;
  all_instr.add(Label::Instrumental, Label::Instrumental, 110);
  all_instr.add(Label::Song, Label::Instrumental, 890);
  const auto c = compute_metrics(all_instr.truth, all_instr.pred).of(Label::Instrumental);
  o.require(within(c.precision, 0.110, 0.001) && within(c.recall, 1.000, 0.001) && within(c.fscore, 0.198, 0.001),
            "AllInstrumental");

  Block rca_instr;
  rca_instr.add(Label::Instrumental, Label::Instrumental, 55);
  rca_instr.add(Label::Instrumental, Label::Song, 55);
  rca_instr.add(Label::Song, Label::Instrumental, 445);
  rca_instr.add(Label::Song, Label::Song, 445);
  const auto d = compute_metrics(rca_instr.truth, rca_instr.pred).of(Label::Instrumental);
  o.require(within(d.fscore, 0.181, 0.001), "RCA Instrumental side");

  o.detail << "AllSong P/R/F=" << format3(a.precision) << "/" << format3(a.recall) << "/" << format3(a.fscore)
           << " RCA(Song) R/F=" << format3(b.recall) << "/" << format3(b.fscore)
           << " AllInstr P/R/F=" << format3(c.precision) << "/" << format3(c.recall) << "/" << format3(c.fscore)
           << " RCA(Instr) F=" << format3(d.fscore) << " (expected 0.181)";
}

void ac2(Outcome& o) {
  std::mt19937_64 rng(20240501);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t cases = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 5000;
    std::vector<double> pv(n);
    const bool sticky = trial % 2;
    double p = u(rng);
    for (auto& v : pv) {
      if (!sticky || u(rng) < 0.03) p = u(rng);
      v = p;
    }
    // brute-force oracles
    std::array<std::size_t, 10> pc{};
    for (double x : pv) {
      std::size_t b = 0;
      while (b < 9 && x >= double(b + 1) / 10.0) ++b;
      ++pc[b];
    }
    std::vector<std::size_t> runs_oracle;
    for (std::size_t i = 0; i < n;) {
      if (pv[i] < 0.5) {
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < n && pv[j] >= 0.5) ++j;
      runs_oracle.push_back(j - i);
      i = j;
    }
    std::array<std::size_t, 30> nc{};
    for (auto len : runs_oracle) ++nc[std::min<std::size_t>(len, 30) - 1];

    const auto ph = probability_histogram(pv);
    const auto runs = voiced_runs(pv, 0.5);
    const auto nh = ngram_histogram(runs);
    bool ok = runs == runs_oracle;
    std::size_t voiced = 0, sum = 0;
    for (double x : pv) voiced += x >= 0.5;
    for (auto r : runs) sum += r;
    ok = ok && sum == voiced;
    for (std::size_t b = 0; b < 10; ++b)
      ok = ok && std::llround(ph[b] * double(n)) == static_cast<long long>(pc[b]) &&
           std::abs(ph[b] - double(pc[b]) / double(n)) <= 1e-9;
    for (std::size_t b = 0; b < 30; ++b) {
      const double expect = runs.empty() ? 0.0 : double(nc[b]) / double(runs.size());
      ok = ok && std::abs(nh[b] - expect) <= 1e-9;
      if (!runs.empty()) ok = ok && std::llround(nh[b] * double(runs.size())) == static_cast<long long>(nc[b]);
    }
    if (ok) ++cases;
  }
  o.require(cases == 1000, "oracle mismatch");
  o.detail << cases << "/1000 random vectors match the brute-force oracles";
}

void ac3(Outcome& o) {
  // MFCC gain invariance
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 0.3);
  AudioClip clip;
  clip.sample_rate_hz = kCanonicalRateHz;
  clip.samples.resize(kCanonicalRateHz);
  for (auto& v : clip.samples) v = std::clamp(g(rng), -1.0, 1.0);
  const auto ref = compute_mfcc(clip);
  double gain_err = 0.0;
  for (double gain : {0.1, 0.5, 2.0}) {
    AudioClip s = clip;
    for (auto& v : s.samples) v *= gain;
    const auto m = compute_mfcc(s);
    for (std::size_t i = 0; i < m.data.size(); ++i) gain_err = std::max(gain_err, std::abs(m.data[i] - ref.data[i]));
  }
  o.require(gain_err <= 1e-6, "gain invariance");

  AudioClip silent;
  silent.sample_rate_hz = kCanonicalRateHz;
  silent.samples.assign(kCanonicalRateHz, 0.0);
  double zero_err = 0.0;
  for (double v : compute_mfcc(silent).data) zero_err = std::max(zero_err, std::abs(v));
  o.require(zero_err <= 1e-9, "zero-signal MFCC");

  double dct_err = 0.0;
  for (std::size_t n : {13u, 40u}) {
    const auto b = dct2_basis(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) acc += b(i, k) * b(j, k);
        dct_err = std::max(dct_err, std::abs(acc - (i == j ? 1.0 : 0.0)));
      }
  }
  o.require(dct_err <= 1e-9, "DCT orthonormality");

  // AdaBoost weight normalisation on a noisy set
  std::vector<std::vector<double>> x;
  std::vector<Label> y;
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int i = 0; i < 120; ++i) {
    std::vector<double> v(kTrackFeatureDim);
    for (auto& e : v) e = n01(rng);
    v[0] += i % 3 == 0 ? 0.8 : -0.8;
    x.push_back(v);
    y.push_back(i % 3 == 0 ? Label::Instrumental : Label::Song);
  }
  double norm_err = 0.0;
  std::size_t rounds = 0;
  train_adaboost(x, y, BoostConfig{}, [&](std::size_t, const BoostRound&, std::span<const double> w) {
    ++rounds;
    norm_err = std::max(norm_err, std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 1.0));
  });
  o.require(norm_err <= 1e-9, "AdaBoost weight normalisation");

  std::vector<double> w(4, 0.25);
  const auto u = boost_reweight(w, std::vector<std::uint8_t>{0, 1, 1, 1});
  const double golden = std::max({std::abs(u.error - 0.25), std::abs(u.alpha - 0.5 * std::log(3.0)),
                                  std::abs(w[0] - 0.5), std::abs(w[1] - 1.0 / 6), std::abs(w[2] - 1.0 / 6),
                                  std::abs(w[3] - 1.0 / 6)});
  o.require(golden <= 1e-12, "AdaBoost golden round");

  o.detail << "gain err=" << gain_err << " zero err=" << zero_err << " dct err=" << dct_err << " weight-sum err="
           << norm_err << " over " << rounds << " rounds, golden err=" << golden;
}

void ac4(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t seed = 1;
  SynthConfig cfg;
  cfg.n_songs = 30;
  cfg.n_instrumentals = 30;
  cfg.test_songs = 216;
  cfg.test_instrumentals = 24;
  cfg.duration_s = 20.0;
  cfg.voice_snr_db = 6.0;
  cfg.seed = seed;
  const auto dir = scratch_dir("ac4");
  const auto manifest = generate_synthetic_corpus(cfg, dir);
  FeatureStore store(manifest);
  const auto plan = make_plan(ExperimentKind::CrossDbFull, manifest, 1, seed);

  ProposedConfig pc;
  pc.rf.seed = seed;
  pc.boost.seed = seed;
  ProposedClassifier proposed(store, pc);
  GaClassifier ga(store, GaConfig{100, 0.5, seed});
  VqmmClassifier vqmm(store, VqmmConfig{128, 50, seed});
  RcaClassifier rca(seed);

  const auto p = run_experiment(plan, proposed).reports[0].of(Label::Instrumental);
  double best_other = 0.0;
  std::ostringstream others;
  for (TrackClassifier* c : std::initializer_list<TrackClassifier*>{&ga, &vqmm, &rca}) {
    const auto m = run_experiment(plan, *c).reports[0].of(Label::Instrumental);
    best_other = std::max(best_other, m.precision);
    others << " " << c->name() << " P=" << format3(m.precision);
  }
  fs::remove_all(dir);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  o.require(p.precision >= 0.90, "Instrumental precision >= 0.90");
  o.require(p.recall >= 0.50, "Instrumental recall >= 0.50");
  o.require(p.precision > best_other, "precision above every baseline");
  o.require(secs <= 300.0, "runtime <= 5 min");
  o.detail << "proposed Instrumental P=" << format3(p.precision) << " R=" << format3(p.recall) << ";" << others.str()
           << "; " << static_cast<int>(secs) << " s";
}

void ac5(Outcome& o) {
  std::size_t wins = 0;
  std::ostringstream rows;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SynthConfig cfg;
    cfg.n_songs = 30;
    cfg.n_instrumentals = 30;
    cfg.test_songs = 216;
    cfg.test_instrumentals = 24;
    cfg.duration_s = 10.0;
    cfg.voice_snr_db = -6.0;
    cfg.seed = 100 + seed;
    const auto dir = scratch_dir("ac5");
    const auto manifest = generate_synthetic_corpus(cfg, dir);
    FeatureStore store(manifest);
    const auto plan = make_plan(ExperimentKind::CrossDbFull, manifest, 1, seed);
    GaClassifier ga(store, GaConfig{100, 0.5, seed});
    VqmmClassifier vqmm(store, VqmmConfig{128, 50, seed});
    const double a = run_experiment(plan, ga).reports[0].accuracy;
    const double b = run_experiment(plan, vqmm).reports[0].accuracy;
    fs::remove_all(dir);
    wins += b >= a;
    rows << " seed" << seed << ": GA=" << format3(a) << " VQMM=" << format3(b) << (b >= a ? "" : " (GA ahead)");
  }
  o.require(2 * wins > 5, "VQMM >= GA on a majority of seeds");
  o.detail << "VQMM >= GA on " << wins << "/5 seeds;" << rows.str();
}

void ac6(Outcome& o) {
  std::vector<Label> t(1000);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = i % 2 ? Label::Instrumental : Label::Song;
  std::vector<double> perfect(1000), constant(1000, 0.3);
  for (std::size_t i = 0; i < 1000; ++i) perfect[i] = t[i] == Label::Instrumental ? 1.0 + double(i) : -double(i);
  const double a = roc_curve(perfect, t, Label::Instrumental).auc;
  const double b = roc_curve(constant, t, Label::Instrumental).auc;
  o.require(a == 1.0, "perfect AUC == 1");
  o.require(b == 0.5, "constant AUC == 0.5");
  std::ostringstream rs;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> s(1000);
    for (auto& v : s) v = u(rng);
    const auto roc = roc_curve(s, t, Label::Instrumental);
    o.require(std::abs(roc.auc - 0.5) <= 0.05, "random AUC within 0.05");
    bool mono = true;
    for (std::size_t i = 1; i < roc.points.size(); ++i)
      mono = mono && roc.points[i].first >= roc.points[i - 1].first && roc.points[i].second >= roc.points[i - 1].second;
    o.require(mono, "ROC monotone");
    rs << " " << format3(roc.auc);
  }
  o.detail << "perfect=" << a << " constant=" << b << " random:" << rs.str();
}

std::vector<TrackRecord> make_records(std::size_t songs, std::size_t instr, Split split, const std::string& prefix) {
  std::vector<TrackRecord> out;
  for (std::size_t i = 0; i < songs + instr; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%07zu", i);
    out.push_back({prefix + buf, i < songs ? Label::Song : Label::Instrumental, split, "x.wav", std::nullopt});
  }
  return out;
}

void ac7(Outcome& o) {
  // 5-fold stratified partition
  const auto recs = make_records(57, 43, Split::Train, "ZZTRN");
  const auto folds = kfold_plan(recs, 5, 11);
  std::multiset<std::string> seen;
  std::size_t lo_s = SIZE_MAX, hi_s = 0, lo_i = SIZE_MAX, hi_i = 0;
  for (const auto& f : folds) {
    std::size_t s = 0;
    for (const auto& r : f) {
      seen.insert(r.isrc);
      s += r.label == Label::Song;
    }
    lo_s = std::min(lo_s, s);
    hi_s = std::max(hi_s, s);
    lo_i = std::min(lo_i, f.size() - s);
    hi_i = std::max(hi_i, f.size() - s);
  }
  bool partition = seen.size() == recs.size();
  for (const auto& r : recs) partition = partition && seen.count(r.isrc) == 1;
  o.require(folds.size() == 5 && partition, "folds partition the corpus");
  o.require(hi_s - lo_s <= 1 && hi_i - lo_i <= 1, "per-class fold counts differ by <= 1");

  // eight balanced repetitions
  const auto samples = cross_db_balanced_plan(make_records(100, 10, Split::Test, "ZZTES"), 8, 3);
  std::set<std::string> songs;
  bool balanced = samples.size() == 8, disjoint = true;
  for (const auto& s : samples) {
    std::size_t n_song = 0;
    for (const auto& r : s)
      if (r.label == Label::Song) {
        ++n_song;
        disjoint = disjoint && songs.insert(r.isrc).second;
      }
    balanced = balanced && 2 * n_song == s.size() && s.size() == 20;
  }
  o.require(balanced, "50/50 composition");
  o.require(disjoint, "Song samples disjoint");

  // leakage
  CorpusManifest m;
  m.records = make_records(20, 20, Split::Train, "ZZTRN");
  for (auto& r : make_records(20, 20, Split::Test, "ZZTES")) m.records.push_back(r);
  auto plan = make_plan(ExperimentKind::CrossDbFull, m, 1, 1);
  bool clean_ok = true, fired = false;
  try {
    check_no_leakage(plan.runs[0]);
  } catch (const Error&) {
    clean_ok = false;
  }
  plan.runs[0].train.push_back(plan.runs[0].test[5]);
  try {
    RcaClassifier rca(1);
    run_experiment(plan, rca);
  } catch (const Error& e) {
    fired = e.code() == ErrorCode::Leakage;
  }
  o.require(clean_ok && fired, "leakage detection");
  o.detail << "folds ok, 8 balanced samples of 20 disjoint, leakage " << (fired ? "detected" : "missed");
}

void ac8(Outcome& o) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<TrackPrediction> big;
  for (int i = 0; i < 3000; ++i) big.push_back(prediction_from_margin("ZZCAP" + std::to_string(1000000 + i), std::abs(g(rng)) + 1e-3));
  const auto pl = generate_playlist(big, Label::Instrumental);
  o.require(pl.cap == 1000 && pl.entries.size() == 1000, "default cap 1000 enforced");

  std::size_t sets = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<TrackPrediction> preds;
    const std::size_t n = 1 + rng() % 500;
    for (std::size_t i = 0; i < n; ++i)
      preds.push_back(prediction_from_margin("ZZRND" + std::to_string(1000000 + i), std::round(g(rng) * 10.0) / 10.0));
    const Label tag = trial % 2 ? Label::Instrumental : Label::Song;
    const auto base = generate_playlist(preds, tag);
    bool ok = true;
    std::size_t prev = base.entries.size();
    for (double mm : {0.1, 0.25, 0.5, 1.0, 2.0}) {
      const auto p = generate_playlist(preds, tag, kDefaultPlaylistCap, mm);
      ok = ok && p.entries.size() <= prev && std::equal(p.entries.begin(), p.entries.end(), base.entries.begin());
      prev = p.entries.size();
    }
    sets += ok;
  }
  o.require(sets == 100, "min_margin anti-monotone");
  o.detail << "cap=" << pl.cap << " entries=" << pl.entries.size() << " from 3000; anti-monotone on " << sets
           << "/100 sets";
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"AC1 baseline metric arithmetic", ac1}, {"AC2 histogram oracle equivalence", ac2},
      {"AC3 numerical invariants", ac3},       {"AC4 separable-corpus end-to-end", ac4},
      {"AC5 VQMM vs GA ordering", ac5},        {"AC6 ROC properties", ac6},
      {"AC7 experiment protocol", ac7},        {"AC8 playlist contract", ac8},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      fn(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << name << ": " << o.detail.str() << std::endl;
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
