// sictag: command-line front end for corpus synthesis, feature extraction,
// training, prediction, experiments and playlist output.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sictag/pipeline.hpp"
#include "sictag/playlist.hpp"
#include "sictag/synth.hpp"

namespace fs = std::filesystem;
using namespace sictag;

namespace {

/// Everything that affects results. Paths are not part of it, so the hash
/// stays stable when a corpus is moved.
struct RunConfig {
  std::uint64_t seed = 1;
  unsigned jobs = 0;
  std::string cache_dir;
  FrameSpec frame;
  MfccConfig mfcc;
  RfConfig rf;
  BoostConfig boost;
  double voiced_threshold = kDefaultVoicedThreshold;
  std::size_t stage2_folds = 3;
  GaConfig ga;
  VqmmConfig vqmm;

  // Per-stage seeds fan out from the one top-level seed.
  RfConfig rf_cfg() const {
    auto c = rf;
    c.seed = derive_seed(seed, "rf");
    return c;
  }
  ProposedConfig proposed() const {
    ProposedConfig c;
    c.rf = rf_cfg();
    c.boost = boost;
    c.boost.seed = derive_seed(seed, "boost");
    c.voiced_threshold = voiced_threshold;
    c.stage2_folds = stage2_folds;
    return c;
  }
  GaConfig ga_cfg() const {
    auto c = ga;
    c.seed = derive_seed(seed, "ga");
    return c;
  }
  VqmmConfig vqmm_cfg() const {
    auto c = vqmm;
    c.seed = derive_seed(seed, "vqmm");
    return c;
  }

  nlohmann::json to_json() const {
    return {{"seed", seed},
            {"frame", {{"frame_len", frame.frame_len}, {"hop", frame.hop}}},
            {"mfcc", {{"n_mels", mfcc.n_mels}, {"n_coeffs", mfcc.n_coeffs}, {"fmin_hz", mfcc.fmin_hz},
                      {"fmax_hz", mfcc.fmax_hz}, {"log_floor", mfcc.log_floor}}},
            {"proposed", proposed().to_json()},
            {"ga", ga_cfg().to_json()},
            {"vqmm", vqmm_cfg().to_json()}};
  }
  std::string hash() const { return hex64(fnv1a64(to_json().dump())); }
};

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << j.dump(1) << '\n';
}

nlohmann::json read_json(const fs::path& path, const std::string& what, const std::string& producer) {
  if (!fs::exists(path))
    throw Error(ErrorCode::MissingArtifact,
                what + " " + path.string() + " not found; run `sictag " + producer + "` first");
  std::ifstream in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
  }
}

/// Model documents get the resolved run config alongside their own fields.
nlohmann::json with_provenance(nlohmann::json doc, const RunConfig& rc) {
  doc["config_hash"] = rc.hash();
  doc["run_config"] = rc.to_json();
  return doc;
}

std::optional<fs::path> cache_dir_of(const RunConfig& rc) {
  if (rc.cache_dir.empty()) return std::nullopt;
  return fs::path(rc.cache_dir);
}

std::unique_ptr<FeatureStore> open_store(const std::string& manifest_path, const RunConfig& rc,
                                         FeatureStore::CachePolicy policy = FeatureStore::CachePolicy::Recompute) {
  rc.frame.validate();
  rc.mfcc.validate(kCanonicalRateHz);
  return std::make_unique<FeatureStore>(load_manifest(manifest_path), rc.frame, rc.mfcc, cache_dir_of(rc), rc.jobs,
                                        policy);
}

void require_fingerprint(const std::string& model_fp, const FeatureStore& store, const std::string& what) {
  if (model_fp != store.fingerprint())
    throw Error(ErrorCode::SchemaMismatch, what + " expects dsp=" + model_fp + " features but the current settings give dsp=" +
                                               store.fingerprint());
}

std::vector<TrackRecord> pick_split(const CorpusManifest& m, const std::string& split) {
  if (split == "all") return m.records;
  return m.subset(parse_split(split));
}

fs::path model_path(const std::string& dir, std::string_view name) { return fs::path(dir) / (std::string(name) + ".json"); }

// predictions file: "# config_hash=<h>" then isrc,label,margin rows
void write_predictions(const fs::path& path, const std::vector<TrackPrediction>& preds, const std::string& hash) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << "# config_hash=" << hash << "\nisrc,label,margin\n";
  char buf[64];
  for (const auto& p : preds) {
    std::snprintf(buf, sizeof buf, "%.17g", p.margin);
    out << p.isrc << ',' << to_lower(to_string(p.predicted_label)) << ',' << buf << '\n';
  }
}

std::vector<TrackPrediction> read_predictions(const fs::path& path) {
  if (!fs::exists(path))
    throw Error(ErrorCode::MissingArtifact, "predictions " + path.string() + " not found; run `sictag predict` first");
  std::ifstream in(path);
  std::string line;
  std::vector<TrackPrediction> out;
  std::size_t row = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (trim(line) != "isrc,label,margin") throw Error(ErrorCode::Parse, path.string() + ": bad header");
      header = true;
      continue;
    }
    std::istringstream ls(line);
    std::string isrc, label, margin;
    if (!std::getline(ls, isrc, ',') || !std::getline(ls, label, ',') || !std::getline(ls, margin))
      throw Error(ErrorCode::Parse, path.string() + ": row " + std::to_string(row) + " needs 3 fields");
    double m = 0.0;
    try {
      m = std::stod(margin);
    } catch (const std::exception&) {
      throw Error(ErrorCode::Parse, path.string() + ": row " + std::to_string(row) + " has a bad margin");
    }
    auto p = prediction_from_margin(isrc, m);
    if (p.predicted_label != parse_label(label))
      throw Error(ErrorCode::Parse, path.string() + ": row " + std::to_string(row) + " label disagrees with margin");
    out.push_back(std::move(p));
  }
  return out;
}

std::unique_ptr<TrackClassifier> make_classifier(const std::string& name, FeatureStore& store, const RunConfig& rc) {
  if (name == "proposed") return std::make_unique<ProposedClassifier>(store, rc.proposed());
  if (name == "ga") return std::make_unique<GaClassifier>(store, rc.ga_cfg());
  if (name == "vqmm") return std::make_unique<VqmmClassifier>(store, rc.vqmm_cfg());
  if (name == "rca") return std::make_unique<RcaClassifier>(derive_seed(rc.seed, "rca"));
  if (name == "allsong") return std::make_unique<ConstantClassifier>(Label::Song);
  if (name == "allinstrumental") return std::make_unique<ConstantClassifier>(Label::Instrumental);
  throw Error(ErrorCode::Invalid, "unknown model '" + name + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Song/Instrumental track tagging"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "key = value file with option defaults");

  RunConfig rc;
  app.add_option("--seed", rc.seed, "top-level seed")->capture_default_str();
  app.add_option("--jobs", rc.jobs, "worker threads (0 = hardware)")->capture_default_str();
  app.add_option("--cache-dir", rc.cache_dir, "feature cache directory")->envname("SICTAG_CACHE_DIR");
  app.add_option("--frame-len", rc.frame.frame_len)->capture_default_str();
  app.add_option("--hop", rc.frame.hop)->capture_default_str();
  app.add_option("--n-mels", rc.mfcc.n_mels)->capture_default_str();
  app.add_option("--fmin", rc.mfcc.fmin_hz)->capture_default_str();
  app.add_option("--fmax", rc.mfcc.fmax_hz, "0 = Nyquist")->capture_default_str();
  app.add_option("--rf-trees", rc.rf.n_trees)->capture_default_str();
  app.add_option("--rf-depth", rc.rf.max_depth)->capture_default_str();
  app.add_option("--rf-min-leaf", rc.rf.min_leaf)->capture_default_str();
  app.add_option("--rf-max-features", rc.rf.max_features, "0 = ceil(sqrt(d))")->capture_default_str();
  app.add_option("--boost-rounds", rc.boost.n_rounds)->capture_default_str();
  app.add_option("--boost-depth", rc.boost.tree_depth)->capture_default_str();
  app.add_option("--weight-song", rc.boost.weight_song)->capture_default_str();
  app.add_option("--weight-instrumental", rc.boost.weight_instrumental)->capture_default_str();
  app.add_option("--voiced-threshold", rc.voiced_threshold)->capture_default_str();
  app.add_option("--stage2-folds", rc.stage2_folds, "0/1 = in-sample stage-2 vectors")->capture_default_str();
  app.add_option("--ga-iterations", rc.ga.iterations)->capture_default_str();
  app.add_option("--ga-threshold", rc.ga.inlier_threshold)->capture_default_str();
  app.add_option("--vqmm-k", rc.vqmm.k)->capture_default_str();
  app.add_option("--vqmm-iters", rc.vqmm.kmeans_iters)->capture_default_str();

  std::string manifest = "manifest.csv", model_dir = "models";
  auto add_manifest = [&](CLI::App* sub) { sub->add_option("--manifest", manifest)->capture_default_str(); };
  auto add_model_dir = [&](CLI::App* sub) { sub->add_option("--model-dir", model_dir)->capture_default_str(); };

  // synth
  SynthConfig synth;
  synth.n_songs = 30;
  synth.n_instrumentals = 30;
  synth.voice_snr_db = 6.0;
  std::string synth_out;
  auto* cmd_synth = app.add_subcommand("synth", "write a seeded synthetic corpus");
  cmd_synth->add_option("--out", synth_out)->required();
  cmd_synth->add_option("--songs", synth.n_songs)->capture_default_str();
  cmd_synth->add_option("--instrumentals", synth.n_instrumentals)->capture_default_str();
  cmd_synth->add_option("--test-songs", synth.test_songs)->capture_default_str();
  cmd_synth->add_option("--test-instrumentals", synth.test_instrumentals)->capture_default_str();
  cmd_synth->add_option("--duration", synth.duration_s, "seconds per track")->capture_default_str();
  cmd_synth->add_option("--snr", synth.voice_snr_db, "voice to accompaniment ratio, dB")->capture_default_str();

  auto* cmd_extract = app.add_subcommand("extract", "compute and cache frame features");
  add_manifest(cmd_extract);

  auto* cmd_frame = app.add_subcommand("train-frame", "train the frame-level voice forest");
  add_manifest(cmd_frame);
  add_model_dir(cmd_frame);

  auto* cmd_track = app.add_subcommand("train-track", "train the track-level AdaBoost model");
  add_manifest(cmd_track);
  add_model_dir(cmd_track);

  std::string baseline;
  auto* cmd_base = app.add_subcommand("train-baseline", "train the GA or VQMM baseline");
  cmd_base->add_option("name", baseline)->required()->check(CLI::IsMember({"ga", "vqmm"}));
  add_manifest(cmd_base);
  add_model_dir(cmd_base);

  std::string predict_model = "proposed", split = "test", predictions = "predictions.csv";
  auto* cmd_predict = app.add_subcommand("predict", "label tracks with a trained model");
  add_manifest(cmd_predict);
  add_model_dir(cmd_predict);
  cmd_predict->add_option("--model", predict_model)->capture_default_str()->check(CLI::IsMember({"proposed", "ga", "vqmm"}));
  cmd_predict->add_option("--split", split)->capture_default_str()->check(CLI::IsMember({"train", "test", "all"}));
  cmd_predict->add_option("--out", predictions)->capture_default_str();

  std::string kind, exp_model = "proposed", out_dir = "reports";
  std::size_t folds = 5, reps = 8;
  auto* cmd_exp = app.add_subcommand("experiment", "run kfold, cross-db-balanced or cross-db-full");
  cmd_exp->add_option("kind", kind)->required()->check(CLI::IsMember({"kfold", "cross-db-balanced", "cross-db-full"}));
  add_manifest(cmd_exp);
  cmd_exp->add_option("--model", exp_model)
      ->capture_default_str()
      ->check(CLI::IsMember({"proposed", "ga", "vqmm", "rca", "allsong", "allinstrumental"}));
  cmd_exp->add_option("--k", folds, "folds for kfold")->capture_default_str();
  cmd_exp->add_option("--reps", reps, "repetitions for cross-db-balanced")->capture_default_str();
  cmd_exp->add_option("--out-dir", out_dir)->capture_default_str();

  std::string tag = "instrumental", playlist_out = "playlist.txt";
  std::size_t cap = kDefaultPlaylistCap;
  double min_margin = 0.0;
  auto* cmd_playlist = app.add_subcommand("playlist", "turn predictions into a capped tag playlist");
  cmd_playlist->add_option("--predictions", predictions)->capture_default_str();
  cmd_playlist->add_option("--tag", tag)->capture_default_str();
  cmd_playlist->add_option("--cap", cap)->capture_default_str();
  cmd_playlist->add_option("--min-margin", min_margin)->capture_default_str();
  cmd_playlist->add_option("--out", playlist_out)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*cmd_synth) {
      synth.seed = rc.seed;
      const auto m = generate_synthetic_corpus(synth, synth_out, rc.jobs);
      std::cout << "wrote " << m.records.size() << " tracks to " << synth_out << '\n';
    } else if (*cmd_extract) {
      if (rc.cache_dir.empty()) rc.cache_dir = (fs::path(manifest).parent_path() / "cache").string();
      auto store = open_store(manifest, rc);
      store->prefetch(store->manifest().records);
      std::cout << "extracted " << store->manifest().records.size() << " tracks into " << rc.cache_dir << " (dsp="
                << store->fingerprint() << ")\n";
    } else if (*cmd_frame) {
      auto store = open_store(manifest, rc);
      auto model = train_frame_stage(*store, store->manifest().subset(Split::Train), rc.rf_cfg());
      model.config_hash = rc.hash();
      const auto path = model_path(model_dir, "frame_model");
      write_json(path, with_provenance(model.to_json(), rc));
      std::cout << "wrote " << path.string() << '\n';
    } else if (*cmd_track) {
      const auto frame_file = model_path(model_dir, "frame_model");
      const auto frame = RandomForestModel::from_json(read_json(frame_file, "frame model", "train-frame"));
      auto store = open_store(manifest, rc);
      require_fingerprint(frame.dsp_fingerprint, *store, "frame model");
      auto model = train_track_stage(*store, store->manifest().subset(Split::Train), frame, rc.proposed());
      model.config_hash = rc.hash();
      const auto path = model_path(model_dir, "track_model");
      write_json(path, with_provenance(model.to_json(), rc));
      std::cout << "wrote " << path.string() << " (" << model.rounds.size() << " rounds)\n";
    } else if (*cmd_base) {
      auto store = open_store(manifest, rc);
      const auto train = store->manifest().subset(Split::Train);
      nlohmann::json doc;
      if (baseline == "ga") {
        GaClassifier c(*store, rc.ga_cfg());
        c.train(train);
        doc = c.model()->to_json();
      } else {
        VqmmClassifier c(*store, rc.vqmm_cfg());
        c.train(train);
        doc = c.model()->to_json();
      }
      doc["dsp_fingerprint"] = store->fingerprint();
      const auto path = model_path(model_dir, baseline + "_model");
      write_json(path, with_provenance(doc, rc));
      std::cout << "wrote " << path.string() << '\n';
    } else if (*cmd_predict) {
      auto store = open_store(manifest, rc, FeatureStore::CachePolicy::Strict);
      const auto records = pick_split(store->manifest(), split);
      store->prefetch(records);
      std::vector<TrackPrediction> preds;
      if (predict_model == "proposed") {
        ProposedModel m;
        m.frame = RandomForestModel::from_json(read_json(model_path(model_dir, "frame_model"), "frame model", "train-frame"));
        m.track = AdaBoostModel::from_json(read_json(model_path(model_dir, "track_model"), "track model", "train-track"));
        require_fingerprint(m.frame.dsp_fingerprint, *store, "frame model");
        require_fingerprint(m.track.dsp_fingerprint, *store, "track model");
        for (const auto& r : records) preds.push_back(predict_proposed(m, store->features(r), r.isrc));
      } else if (predict_model == "ga") {
        const auto doc = read_json(model_path(model_dir, "ga_model"), "GA model", "train-baseline ga");
        require_fingerprint(doc.value("dsp_fingerprint", std::string{}), *store, "GA model");
        const auto m = RansacModel::from_json(doc);
        for (const auto& r : records) preds.push_back(predict_ga(m, track_mean_mfcc(store->features(r).values), r.isrc));
      } else {
        const auto doc = read_json(model_path(model_dir, "vqmm_model"), "VQMM model", "train-baseline vqmm");
        require_fingerprint(doc.value("dsp_fingerprint", std::string{}), *store, "VQMM model");
        const auto m = VqmmModel::from_json(doc);
        for (const auto& r : records) preds.push_back(predict_vqmm(m, store->features(r).values, r.isrc));
      }
      write_predictions(predictions, preds, rc.hash());
      std::cout << "wrote " << preds.size() << " predictions to " << predictions << '\n';
    } else if (*cmd_exp) {
      auto store = open_store(manifest, rc);
      const auto k = parse_experiment_kind(kind);
      const auto plan = make_plan(k, store->manifest(), k == ExperimentKind::KFold ? folds : reps,
                                  derive_seed(rc.seed, "plan"));
      auto classifier = make_classifier(exp_model, *store, rc);
      const auto result = run_experiment(plan, *classifier);
      fs::create_directories(out_dir);
      const auto stem = fs::path(out_dir) / (kind + "_" + exp_model);
      const auto csv = format_report_csv(result);
      {
        std::ofstream out(stem.string() + ".csv", std::ios::trunc);
        if (!out) throw Error(ErrorCode::Io, "cannot write " + stem.string() + ".csv");
        out << csv;
      }
      auto report = report_to_json(result, rc.to_json());
      report["config_hash"] = rc.hash();
      write_json(stem.string() + ".json", report);
      for (std::size_t i = 0; i < result.reports.size(); ++i) {
        std::vector<double> scores;
        for (const auto& p : result.predictions[i]) scores.push_back(p.margin);
        const auto& truth = result.truths[i];
        if (std::count(truth.begin(), truth.end(), Label::Instrumental) == 0 ||
            std::count(truth.begin(), truth.end(), Label::Song) == 0)
          continue;
        write_roc_csv(roc_curve(scores, truth, Label::Instrumental),
                      stem.string() + "_roc_" + result.run_names[i] + ".csv");
      }
      std::cout << csv;
    } else if (*cmd_playlist) {
      const Label t = parse_label(tag);
      const auto preds = read_predictions(predictions);
      const auto pl = generate_playlist(preds, t, cap, min_margin);
      fs::path p(playlist_out);
      if (p.has_parent_path()) fs::create_directories(p.parent_path());
      write_playlist(pl, p);
      std::cout << "wrote " << pl.entries.size() << " entries to " << playlist_out << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "sictag: error: " << to_string(e.code()) << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "sictag: error: internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
