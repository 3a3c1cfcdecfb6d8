#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "sictag/common.hpp"
#include "sictag/corpus.hpp"
#include "sictag/track_model.hpp"

namespace sictag {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double fscore = 0.0;
  std::size_t support = 0;  // true members of the class
};

/// Confusion matrix is indexed [true][predicted] with Song = 0, Instrumental = 1.
struct EvalReport {
  std::array<std::array<std::size_t, 2>, 2> confusion{};
  std::array<ClassMetrics, 2> per_class{};
  double accuracy = 0.0;
  /// Support-weighted mean of the per-class f-scores.
  double global_fscore = 0.0;
  std::size_t n_tracks = 0;
  Label positive_class = Label::Instrumental;

  const ClassMetrics& of(Label label) const { return per_class[index_of(label)]; }
  const ClassMetrics& positive() const { return of(positive_class); }

  nlohmann::json to_json() const {
    nlohmann::json classes = nlohmann::json::object();
    for (Label l : {Label::Song, Label::Instrumental}) {
      const auto& m = of(l);
      classes[std::string(to_string(l))] = {
          {"precision", m.precision}, {"recall", m.recall}, {"fscore", m.fscore}, {"support", m.support}};
    }
    return {{"confusion", confusion}, {"classes", classes}, {"accuracy", accuracy},
            {"global_fscore", global_fscore}, {"n_tracks", n_tracks}, {"positive_class", to_string(positive_class)}};
  }
};

inline double safe_ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

inline double harmonic_fscore(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

inline EvalReport compute_metrics(std::span<const Label> truth, std::span<const Label> predicted,
                                  Label positive_class = Label::Instrumental) {
  if (truth.size() != predicted.size())
    throw Error(ErrorCode::DimensionMismatch, "truth and prediction lists differ in length");
  if (truth.empty()) throw Error(ErrorCode::EmptyInput, "no tracks to evaluate");
  EvalReport rep;
  rep.positive_class = positive_class;
  rep.n_tracks = truth.size();
  for (std::size_t i = 0; i < truth.size(); ++i) ++rep.confusion[index_of(truth[i])][index_of(predicted[i])];
  for (std::size_t c = 0; c < 2; ++c) {
    const auto tp = static_cast<double>(rep.confusion[c][c]);
    const auto fp = static_cast<double>(rep.confusion[1 - c][c]);
    const auto fn = static_cast<double>(rep.confusion[c][1 - c]);
    auto& m = rep.per_class[c];
    m.precision = safe_ratio(tp, tp + fp);
    m.recall = safe_ratio(tp, tp + fn);
    m.fscore = harmonic_fscore(m.precision, m.recall);
    m.support = rep.confusion[c][0] + rep.confusion[c][1];
  }
  const auto n = static_cast<double>(rep.n_tracks);
  rep.accuracy = static_cast<double>(rep.confusion[0][0] + rep.confusion[1][1]) / n;
  rep.global_fscore = (rep.per_class[0].fscore * static_cast<double>(rep.per_class[0].support) +
                       rep.per_class[1].fscore * static_cast<double>(rep.per_class[1].support)) / n;
  return rep;
}

inline std::string format3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

// ---------------------------------------------------------------------------

struct RocCurve {
  std::vector<std::pair<double, double>> points;  // (fpr, tpr)
  double auc = 0.0;
};

/// Threshold sweep over distinct scores, highest first; tied scores enter
/// together. Higher score means more likely positive.
inline RocCurve roc_curve(std::span<const double> scores, std::span<const Label> truth, Label positive_class) {
  if (scores.size() != truth.size()) throw Error(ErrorCode::DimensionMismatch, "scores and labels differ in length");
  const auto pos = static_cast<std::size_t>(std::count(truth.begin(), truth.end(), positive_class));
  const std::size_t neg = truth.size() - pos;
  if (pos == 0 || neg == 0) throw Error(ErrorCode::SingleClass, "ROC needs both classes in the truth labels");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve roc;
  roc.points.emplace_back(0.0, 0.0);
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) (truth[order[i]] == positive_class ? tp : fp) += 1;
    roc.points.emplace_back(static_cast<double>(fp) / static_cast<double>(neg),
                            static_cast<double>(tp) / static_cast<double>(pos));
  }
  if (roc.points.back() != std::pair{1.0, 1.0}) roc.points.emplace_back(1.0, 1.0);
  for (std::size_t i = 1; i < roc.points.size(); ++i) {
    const auto [x0, y0] = roc.points[i - 1];
    const auto [x1, y1] = roc.points[i];
    roc.auc += (x1 - x0) * (y0 + y1) / 2.0;
  }
  return roc;
}

inline void write_roc_csv(const RocCurve& roc, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << "fpr,tpr\n";
  char buf[64];
  for (const auto& [x, y] : roc.points) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f\n", x, y);
    out << buf;
  }
}

// ---------------------------------------------------------------------------
// Experiment plans.

enum class ExperimentKind { KFold, CrossDbBalanced, CrossDbFull };

inline std::string_view to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::KFold: return "kfold";
    case ExperimentKind::CrossDbBalanced: return "cross-db-balanced";
    case ExperimentKind::CrossDbFull: return "cross-db-full";
  }
  return "unknown";
}

inline ExperimentKind parse_experiment_kind(std::string_view text) {
  const auto s = to_lower(text);
  if (s == "kfold") return ExperimentKind::KFold;
  if (s == "cross-db-balanced" || s == "cross_db_balanced") return ExperimentKind::CrossDbBalanced;
  if (s == "cross-db-full" || s == "cross_db_full") return ExperimentKind::CrossDbFull;
  throw Error(ErrorCode::Invalid, "unknown experiment kind '" + std::string(text) + "'");
}

/// Stratified folds: each class is shuffled and dealt round-robin, and the
/// deal continues across classes so fold sizes differ by at most one.
inline std::vector<std::vector<TrackRecord>> kfold_plan(const std::vector<TrackRecord>& records, std::size_t k,
                                                        std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::Invalid, "k-fold needs k >= 2");
  std::vector<std::vector<TrackRecord>> folds(k);
  std::size_t next = 0;
  for (Label label : {Label::Song, Label::Instrumental}) {
    std::vector<TrackRecord> members;
    for (const auto& r : records)
      if (r.label == label) members.push_back(r);
    if (members.size() < k)
      throw Error(ErrorCode::InsufficientData, std::string(to_string(label)) + " class has " +
                                                   std::to_string(members.size()) + " tracks, fewer than k=" +
                                                   std::to_string(k));
    std::mt19937_64 rng(derive_seed(seed, "kfold", index_of(label)));
    std::shuffle(members.begin(), members.end(), rng);
    for (auto& m : members) folds[next++ % k].push_back(std::move(m));
  }
  return folds;
}

/// Repeated balanced test samples: every repetition holds all Instrumentals
/// of the pool plus as many Songs, drawn without replacement across
/// repetitions.
inline std::vector<std::vector<TrackRecord>> cross_db_balanced_plan(const std::vector<TrackRecord>& test_pool,
                                                                    std::size_t n_repetitions, std::uint64_t seed) {
  if (n_repetitions == 0) throw Error(ErrorCode::Invalid, "need at least one repetition");
  std::vector<TrackRecord> songs, instrumentals;
  for (const auto& r : test_pool) (r.label == Label::Song ? songs : instrumentals).push_back(r);
  if (instrumentals.empty()) throw Error(ErrorCode::InsufficientData, "test pool has no Instrumentals");
  const std::size_t m = instrumentals.size();
  if (songs.size() < n_repetitions * m)
    throw Error(ErrorCode::InsufficientData, "need " + std::to_string(n_repetitions * m) + " Songs for " +
                                                 std::to_string(n_repetitions) + " balanced samples, pool has " +
                                                 std::to_string(songs.size()));
  std::mt19937_64 rng(derive_seed(seed, "balanced"));
  std::shuffle(songs.begin(), songs.end(), rng);
  std::vector<std::vector<TrackRecord>> samples(n_repetitions);
  for (std::size_t r = 0; r < n_repetitions; ++r) {
    auto& s = samples[r];
    s.insert(s.end(), songs.begin() + static_cast<std::ptrdiff_t>(r * m),
             songs.begin() + static_cast<std::ptrdiff_t>((r + 1) * m));
    s.insert(s.end(), instrumentals.begin(), instrumentals.end());
  }
  return samples;
}

struct ExperimentRun {
  std::string name;
  std::vector<TrackRecord> train;
  std::vector<TrackRecord> test;
};

struct ExperimentPlan {
  ExperimentKind kind = ExperimentKind::CrossDbFull;
  std::size_t folds_or_repetitions = 1;
  std::uint64_t seed = 0;
  Label positive_class = Label::Instrumental;
  std::vector<ExperimentRun> runs;
};

/// kfold runs over the train split (the balanced development set); the
/// cross-database kinds train on the train split and test on the test split.
inline ExperimentPlan make_plan(ExperimentKind kind, const CorpusManifest& manifest, std::size_t folds_or_repetitions,
                                std::uint64_t seed, Label positive_class = Label::Instrumental) {
  ExperimentPlan plan;
  plan.kind = kind;
  plan.folds_or_repetitions = folds_or_repetitions;
  plan.seed = seed;
  plan.positive_class = positive_class;
  const auto train = manifest.subset(Split::Train);
  const auto test = manifest.subset(Split::Test);
  switch (kind) {
    case ExperimentKind::KFold: {
      const auto folds = kfold_plan(train, folds_or_repetitions, seed);
      for (std::size_t f = 0; f < folds.size(); ++f) {
        ExperimentRun run;
        run.name = "fold" + std::to_string(f + 1);
        run.test = folds[f];
        for (std::size_t g = 0; g < folds.size(); ++g)
          if (g != f) run.train.insert(run.train.end(), folds[g].begin(), folds[g].end());
        plan.runs.push_back(std::move(run));
      }
      break;
    }
    case ExperimentKind::CrossDbBalanced: {
      const auto samples = cross_db_balanced_plan(test, folds_or_repetitions, seed);
      for (std::size_t r = 0; r < samples.size(); ++r)
        plan.runs.push_back({"rep" + std::to_string(r + 1), train, samples[r]});
      break;
    }
    case ExperimentKind::CrossDbFull:
      plan.folds_or_repetitions = 1;
      plan.runs.push_back({"full", train, test});
      break;
  }
  for (const auto& run : plan.runs)
    if (run.train.empty() || run.test.empty())
      throw Error(ErrorCode::InsufficientData, "experiment run " + run.name + " has an empty train or test set");
  return plan;
}

/// Throws if any test ISRC also appears in the training material.
inline void check_no_leakage(const ExperimentRun& run) {
  std::unordered_set<std::string> train;
  for (const auto& r : run.train) train.insert(r.isrc);
  for (const auto& r : run.test)
    if (train.contains(r.isrc))
      throw Error(ErrorCode::Leakage, "run " + run.name + ": test track " + r.isrc + " is also in the training set");
}

/// Anything that can be trained on records and then label other records.
class TrackClassifier {
 public:
  virtual ~TrackClassifier() = default;
  virtual std::string name() const = 0;
  virtual void train(const std::vector<TrackRecord>& train) = 0;
  virtual std::vector<TrackPrediction> predict(const std::vector<TrackRecord>& test) = 0;
};

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation across runs
};

struct ExperimentResult {
  std::string experiment;
  std::string classifier;
  Label positive_class = Label::Instrumental;
  std::vector<std::string> run_names;
  std::vector<EvalReport> reports;
  std::vector<std::vector<TrackPrediction>> predictions;
  std::vector<std::vector<Label>> truths;

  /// Summary of one scalar pulled from every report.
  template <typename Fn>
  MetricSummary summarize(Fn&& metric) const {
    MetricSummary s;
    if (reports.empty()) return s;
    for (const auto& r : reports) s.mean += metric(r);
    s.mean /= static_cast<double>(reports.size());
    for (const auto& r : reports) s.std += (metric(r) - s.mean) * (metric(r) - s.mean);
    s.std = std::sqrt(s.std / static_cast<double>(reports.size()));
    return s;
  }

  MetricSummary accuracy() const { return summarize([](const EvalReport& r) { return r.accuracy; }); }
  MetricSummary global_fscore() const { return summarize([](const EvalReport& r) { return r.global_fscore; }); }
};

inline ExperimentResult run_experiment(const ExperimentPlan& plan, TrackClassifier& classifier) {
  ExperimentResult result;
  result.experiment = std::string(to_string(plan.kind));
  result.classifier = classifier.name();
  result.positive_class = plan.positive_class;
  for (const auto& run : plan.runs) check_no_leakage(run);
  for (const auto& run : plan.runs) {
    classifier.train(run.train);
    auto preds = classifier.predict(run.test);
    if (preds.size() != run.test.size())
      throw Error(ErrorCode::DimensionMismatch, classifier.name() + " returned the wrong number of predictions");
    std::vector<Label> truth, predicted;
    for (std::size_t i = 0; i < run.test.size(); ++i) {
      truth.push_back(run.test[i].label);
      predicted.push_back(preds[i].predicted_label);
    }
    result.run_names.push_back(run.name);
    result.reports.push_back(compute_metrics(truth, predicted, plan.positive_class));
    result.predictions.push_back(std::move(preds));
    result.truths.push_back(std::move(truth));
  }
  return result;
}

inline constexpr std::string_view kReportCsvHeader = "experiment,repetition,class,precision,recall,fscore,accuracy";

/// One row per class per run, then mean and std rows per class.
inline std::string format_report_csv(const ExperimentResult& res) {
  std::string out(kReportCsvHeader);
  out += '\n';
  auto row = [&](const std::string& rep, Label cls, double p, double r, double f, double acc) {
    out += res.experiment + ',' + rep + ',' + std::string(to_string(cls)) + ',' + format3(p) + ',' + format3(r) + ',' +
           format3(f) + ',' + format3(acc) + '\n';
  };
  for (std::size_t i = 0; i < res.reports.size(); ++i)
    for (Label cls : {Label::Song, Label::Instrumental}) {
      const auto& m = res.reports[i].of(cls);
      row(res.run_names[i], cls, m.precision, m.recall, m.fscore, res.reports[i].accuracy);
    }
  for (Label cls : {Label::Song, Label::Instrumental}) {
    const auto p = res.summarize([&](const EvalReport& r) { return r.of(cls).precision; });
    const auto rc = res.summarize([&](const EvalReport& r) { return r.of(cls).recall; });
    const auto f = res.summarize([&](const EvalReport& r) { return r.of(cls).fscore; });
    const auto acc = res.accuracy();
    row("mean", cls, p.mean, rc.mean, f.mean, acc.mean);
    row("std", cls, p.std, rc.std, f.std, acc.std);
  }
  return out;
}

inline nlohmann::json report_to_json(const ExperimentResult& res, const nlohmann::json& config = nullptr) {
  nlohmann::json runs = nlohmann::json::array();
  for (std::size_t i = 0; i < res.reports.size(); ++i) {
    auto r = res.reports[i].to_json();
    r["name"] = res.run_names[i];
    runs.push_back(std::move(r));
  }
  const auto acc = res.accuracy(), f = res.global_fscore();
  return {{"schema", "eval_report/1"},
          {"experiment", res.experiment},
          {"classifier", res.classifier},
          {"positive_class", to_string(res.positive_class)},
          {"runs", runs},
          {"aggregate",
           {{"accuracy", {{"mean", acc.mean}, {"std", acc.std}}}, {"global_fscore", {{"mean", f.mean}, {"std", f.std}}}}},
          {"config", config}};
}

}  // namespace sictag
