#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "sictag/aggregate.hpp"
#include "sictag/baselines.hpp"
#include "sictag/corpus.hpp"
#include "sictag/dsp.hpp"
#include "sictag/eval.hpp"
#include "sictag/frame_model.hpp"
#include "sictag/track_model.hpp"
#include "sictag/wav.hpp"

namespace sictag {

/// Decodes and featurises tracks on demand, memoising in memory and
/// optionally in a cache directory (<isrc>.feat).
class FeatureStore {
 public:
  enum class CachePolicy {
    Recompute,  // stale or missing cache entries are rebuilt
    Strict,     // a stale cache entry is an error
  };

  FeatureStore(CorpusManifest manifest, FrameSpec spec = {}, MfccConfig cfg = {},
               std::optional<std::filesystem::path> cache_dir = std::nullopt, unsigned jobs = 0,
               CachePolicy policy = CachePolicy::Recompute)
      : manifest_(std::move(manifest)),
        extractor_(kCanonicalRateHz, spec, cfg),
        cache_dir_(std::move(cache_dir)),
        jobs_(jobs),
        policy_(policy),
        fingerprint_(dsp_fingerprint(kCanonicalRateHz, spec, cfg)) {
    if (cache_dir_) {
      std::error_code ec;
      std::filesystem::create_directories(*cache_dir_, ec);
      if (ec) throw Error(ErrorCode::Io, "cannot create cache directory " + cache_dir_->string());
    }
  }

  const CorpusManifest& manifest() const { return manifest_; }
  const std::string& fingerprint() const { return fingerprint_; }
  unsigned jobs() const { return jobs_; }

  const FeatureMatrix& features(const TrackRecord& rec) {
    {
      std::lock_guard lock(mutex_);
      if (auto it = memo_.find(rec.isrc); it != memo_.end()) return *it->second;
    }
    auto fm = std::make_shared<FeatureMatrix>(load_or_compute(rec));
    std::lock_guard lock(mutex_);
    auto [it, inserted] = memo_.emplace(rec.isrc, std::move(fm));
    return *it->second;
  }

  /// Extracts every record's features, in parallel.
  void prefetch(const std::vector<TrackRecord>& records) {
    parallel_for(records.size(), jobs_, [&](std::size_t i) { features(records[i]); });
  }

  VocalActivityAnnotation annotation(const TrackRecord& rec) const { return load_record_annotation(manifest_, rec); }

 private:
  FeatureMatrix load_or_compute(const TrackRecord& rec) const {
    std::optional<std::filesystem::path> cache_path;
    if (cache_dir_) {
      cache_path = *cache_dir_ / (rec.isrc + ".feat");
      if (auto cached = read_feature_cache(*cache_path, fingerprint_)) return std::move(*cached);
      if (policy_ == CachePolicy::Strict) {
        if (const auto fp = read_feature_cache_fingerprint(*cache_path))
          throw Error(ErrorCode::StaleCache, rec.isrc + ": cached features were extracted with dsp=" + *fp +
                                                 ", expected dsp=" + fingerprint_ + "; run `extract` again");
      }
    }
    const AudioClip clip = load_audio(manifest_.resolve(rec.audio_path), kCanonicalRateHz);
    FeatureMatrix fm = extractor_.features(clip);
    if (cache_path) write_feature_cache(*cache_path, fm, fingerprint_);
    return fm;
  }

  CorpusManifest manifest_;
  MfccExtractor extractor_;
  std::optional<std::filesystem::path> cache_dir_;
  unsigned jobs_;
  CachePolicy policy_;
  std::string fingerprint_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<FeatureMatrix>> memo_;
};

// ---------------------------------------------------------------------------
// Two-stage pipeline: frame forest -> track vector -> AdaBoost.

struct ProposedConfig {
  RfConfig rf;
  BoostConfig boost;
  double voiced_threshold = kDefaultVoicedThreshold;
  /// Stage-2 training vectors come from forests that did not see the track
  /// (track-grouped folds). 0 or 1 uses the final forest in-sample.
  std::size_t stage2_folds = 3;

  nlohmann::json to_json() const {
    return {{"rf", rf.to_json()}, {"boost", boost.to_json()}, {"voiced_threshold", voiced_threshold},
            {"stage2_folds", stage2_folds}};
  }
};

struct ProposedModel {
  RandomForestModel frame;
  AdaBoostModel track;
};

namespace detail {

struct FrameTrainingSet {
  Matrix x;
  FrameLabels y;
};

/// Stacks frames of Instrumentals and of annotated Songs. Songs without an
/// annotation can't be labelled at frame level and are skipped.
inline FrameTrainingSet stack_frames(FeatureStore& store, const std::vector<TrackRecord>& records) {
  std::size_t rows = 0;
  std::vector<const TrackRecord*> used;
  for (const auto& r : records) {
    if (r.label == Label::Song && !r.annotation_path) continue;
    used.push_back(&r);
    rows += store.features(r).rows();
  }
  FrameTrainingSet set;
  set.x = Matrix(rows, kFrameFeatureDim);
  set.y.reserve(rows);
  std::size_t at = 0;
  for (const auto* r : used) {
    const auto& fm = store.features(*r);
    const auto ann = store.annotation(*r);
    const auto labels = align_labels(ann, fm.frame_times_s, r->label);
    std::copy(fm.values.data.begin(), fm.values.data.end(),
              set.x.data.begin() + static_cast<std::ptrdiff_t>(at * kFrameFeatureDim));
    set.y.insert(set.y.end(), labels.begin(), labels.end());
    at += fm.rows();
  }
  return set;
}

}  // namespace detail

inline std::vector<double> proposed_track_vector(const RandomForestModel& frame, const FeatureMatrix& fm,
                                                 double voiced_threshold) {
  const auto pv = predict_frame_probabilities(frame, fm);
  return build_track_vector(pv, fm, voiced_threshold).flatten();
}

/// Stage 1: the frame forest over every usable training frame.
inline RandomForestModel train_frame_stage(FeatureStore& store, const std::vector<TrackRecord>& train,
                                           const RfConfig& rf) {
  if (train.empty()) throw Error(ErrorCode::EmptyInput, "empty training set");
  store.prefetch(train);
  const auto set = detail::stack_frames(store, train);
  auto model = train_frame_classifier(set.x, set.y, rf, store.jobs());
  model.dsp_fingerprint = store.fingerprint();
  return model;
}

/// Stage 2: AdaBoost on track vectors. With stage2_folds >= 2 each training
/// vector comes from a forest that did not see the track (label-stratified
/// track folds, same forest settings as `frame`); otherwise `frame` itself
/// is applied in-sample.
inline AdaBoostModel train_track_stage(FeatureStore& store, const std::vector<TrackRecord>& train,
                                       const RandomForestModel& frame, const ProposedConfig& cfg) {
  if (train.empty()) throw Error(ErrorCode::EmptyInput, "empty training set");
  if (!frame.dsp_fingerprint.empty() && frame.dsp_fingerprint != store.fingerprint())
    throw Error(ErrorCode::SchemaMismatch, "frame model was trained on dsp=" + frame.dsp_fingerprint +
                                               " features, current settings give dsp=" + store.fingerprint());
  store.prefetch(train);
  std::vector<std::vector<double>> vectors(train.size());
  std::vector<Label> labels(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) labels[i] = train[i].label;

  if (cfg.stage2_folds >= 2) {
    std::vector<std::size_t> fold_of(train.size());
    std::array<std::size_t, 2> seen{};
    for (std::size_t i = 0; i < train.size(); ++i) fold_of[i] = seen[index_of(train[i].label)]++ % cfg.stage2_folds;
    for (std::size_t f = 0; f < cfg.stage2_folds; ++f) {
      std::vector<TrackRecord> inner;
      for (std::size_t i = 0; i < train.size(); ++i)
        if (fold_of[i] != f) inner.push_back(train[i]);
      const auto set = detail::stack_frames(store, inner);
      RfConfig rf = frame.config;
      rf.seed = derive_seed(frame.config.seed, "stage2-fold", f);
      const auto forest = train_frame_classifier(set.x, set.y, rf, store.jobs());
      for (std::size_t i = 0; i < train.size(); ++i)
        if (fold_of[i] == f) vectors[i] = proposed_track_vector(forest, store.features(train[i]), cfg.voiced_threshold);
    }
  } else {
    for (std::size_t i = 0; i < train.size(); ++i)
      vectors[i] = proposed_track_vector(frame, store.features(train[i]), cfg.voiced_threshold);
  }

  auto model = train_adaboost(vectors, labels, cfg.boost);
  model.voiced_threshold = cfg.voiced_threshold;
  model.dsp_fingerprint = store.fingerprint();
  return model;
}

inline ProposedModel train_proposed(FeatureStore& store, const std::vector<TrackRecord>& train,
                                    const ProposedConfig& cfg) {
  ProposedModel model;
  model.frame = train_frame_stage(store, train, cfg.rf);
  model.track = train_track_stage(store, train, model.frame, cfg);
  return model;
}

inline TrackPrediction predict_proposed(const ProposedModel& model, const FeatureMatrix& fm, std::string isrc = {}) {
  return predict_track(model.track, proposed_track_vector(model.frame, fm, model.track.voiced_threshold),
                       std::move(isrc));
}

// ---------------------------------------------------------------------------
// Classifier adapters for the experiment runner.

class ProposedClassifier : public TrackClassifier {
 public:
  ProposedClassifier(FeatureStore& store, ProposedConfig cfg) : store_(store), cfg_(std::move(cfg)) {}
  std::string name() const override { return "proposed"; }
  void train(const std::vector<TrackRecord>& train) override { model_ = train_proposed(store_, train, cfg_); }
  std::vector<TrackPrediction> predict(const std::vector<TrackRecord>& test) override {
    if (!model_) throw Error(ErrorCode::MissingArtifact, "proposed classifier used before training");
    store_.prefetch(test);
    std::vector<TrackPrediction> out(test.size());
    parallel_for(test.size(), store_.jobs(),
                 [&](std::size_t i) { out[i] = predict_proposed(*model_, store_.features(test[i]), test[i].isrc); });
    return out;
  }
  const std::optional<ProposedModel>& model() const { return model_; }

 private:
  FeatureStore& store_;
  ProposedConfig cfg_;
  std::optional<ProposedModel> model_;
};

class GaClassifier : public TrackClassifier {
 public:
  GaClassifier(FeatureStore& store, GaConfig cfg) : store_(store), cfg_(cfg) {}
  std::string name() const override { return "ga"; }
  void train(const std::vector<TrackRecord>& train) override {
    store_.prefetch(train);
    std::vector<std::vector<double>> feats;
    std::vector<Label> labels;
    for (const auto& r : train) {
      feats.push_back(track_mean_mfcc(store_.features(r).values));
      labels.push_back(r.label);
    }
    model_ = train_ga(feats, labels, cfg_);
  }
  std::vector<TrackPrediction> predict(const std::vector<TrackRecord>& test) override {
    if (!model_) throw Error(ErrorCode::MissingArtifact, "GA classifier used before training");
    store_.prefetch(test);
    std::vector<TrackPrediction> out;
    for (const auto& r : test) out.push_back(predict_ga(*model_, track_mean_mfcc(store_.features(r).values), r.isrc));
    return out;
  }
  const std::optional<RansacModel>& model() const { return model_; }

 private:
  FeatureStore& store_;
  GaConfig cfg_;
  std::optional<RansacModel> model_;
};

class VqmmClassifier : public TrackClassifier {
 public:
  VqmmClassifier(FeatureStore& store, VqmmConfig cfg) : store_(store), cfg_(cfg) {}
  std::string name() const override { return "vqmm"; }
  void train(const std::vector<TrackRecord>& train) override {
    store_.prefetch(train);
    std::vector<Matrix> tracks;
    std::vector<Label> labels;
    for (const auto& r : train) {
      tracks.push_back(mfcc_columns(store_.features(r).values));
      labels.push_back(r.label);
    }
    model_ = train_vqmm(tracks, labels, cfg_, store_.jobs());
  }
  std::vector<TrackPrediction> predict(const std::vector<TrackRecord>& test) override {
    if (!model_) throw Error(ErrorCode::MissingArtifact, "VQMM classifier used before training");
    store_.prefetch(test);
    std::vector<TrackPrediction> out(test.size());
    parallel_for(test.size(), store_.jobs(),
                 [&](std::size_t i) { out[i] = predict_vqmm(*model_, store_.features(test[i]).values, test[i].isrc); });
    return out;
  }
  const std::optional<VqmmModel>& model() const { return model_; }

 private:
  FeatureStore& store_;
  VqmmConfig cfg_;
  std::optional<VqmmModel> model_;
};

class RcaClassifier : public TrackClassifier {
 public:
  explicit RcaClassifier(std::uint64_t seed) : seed_(seed) {}
  std::string name() const override { return "rca"; }
  void train(const std::vector<TrackRecord>&) override {}
  std::vector<TrackPrediction> predict(const std::vector<TrackRecord>& test) override {
    std::vector<std::string> isrcs;
    for (const auto& r : test) isrcs.push_back(r.isrc);
    return predict_rca(isrcs, seed_);
  }

 private:
  std::uint64_t seed_;
};

class ConstantClassifier : public TrackClassifier {
 public:
  explicit ConstantClassifier(Label label) : label_(label) {}
  std::string name() const override { return label_ == Label::Song ? "allsong" : "allinstrumental"; }
  void train(const std::vector<TrackRecord>&) override {}
  std::vector<TrackPrediction> predict(const std::vector<TrackRecord>& test) override {
    std::vector<std::string> isrcs;
    for (const auto& r : test) isrcs.push_back(r.isrc);
    return predict_all(isrcs, label_);
  }

 private:
  Label label_;
};

}  // namespace sictag
