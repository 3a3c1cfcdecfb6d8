#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "sictag/common.hpp"
#include "sictag/corpus.hpp"
#include "sictag/wav.hpp"

namespace sictag {

/// Desk-scale stand-in corpus. Train counts are n_songs / n_instrumentals;
/// test_* counts add records to the test split.
struct SynthConfig {
  std::size_t n_songs = 0;
  std::size_t n_instrumentals = 0;
  std::size_t test_songs = 0;
  std::size_t test_instrumentals = 0;
  double duration_s = 20.0;
  std::uint64_t seed = 0;
  /// Voice RMS relative to the accompaniment RMS while the voice is active.
  double voice_snr_db = 0.0;
  int sample_rate_hz = kCanonicalRateHz;
};

struct SynthTrack {
  std::vector<double> samples;
  VocalActivityAnnotation annotation;
};

namespace detail {

/// Random voiced intervals covering a fraction in [0.32, 0.68] of the track.
/// The band is slightly narrower than [0.3, 0.7] so 6-decimal rendering
/// can't push the total outside it.
inline VocalActivityAnnotation random_voiced_intervals(std::mt19937_64& rng, double duration_s) {
  std::uniform_real_distribution<double> cover_dist(0.32, 0.68);
  const double coverage = cover_dist(rng);
  const double voiced = coverage * duration_s;
  constexpr double min_phrase = 0.8;
  std::uniform_int_distribution<int> count_dist(2, 5);
  int phrases = count_dist(rng);
  phrases = std::max(1, std::min(phrases, static_cast<int>(voiced / min_phrase)));

  std::exponential_distribution<double> expo(1.0);
  auto split = [&](double total, int parts, double floor_each) {
    std::vector<double> w(static_cast<std::size_t>(parts));
    double sum = 0.0;
    for (auto& x : w) sum += (x = expo(rng));
    const double spare = total - floor_each * parts;
    for (auto& x : w) x = floor_each + spare * x / sum;
    return w;
  };
  const auto lengths = split(voiced, phrases, min_phrase);
  const auto gaps = split(duration_s - voiced, phrases + 1, 0.0);

  VocalActivityAnnotation ann;
  double t = 0.0;
  for (int i = 0; i < phrases; ++i) {
    t += gaps[static_cast<std::size_t>(i)];
    const double start = t;
    t += lengths[static_cast<std::size_t>(i)];
    ann.intervals.push_back({start, std::min(t, duration_s)});
  }
  // round to the precision the annotation file carries
  for (auto& iv : ann.intervals) {
    iv.start_s = std::round(iv.start_s * 1e6) / 1e6;
    iv.end_s = std::min(std::round(iv.end_s * 1e6) / 1e6, std::floor(duration_s * 1e6) / 1e6);
  }
  return ann;
}

/// Adds sum_k amp_k(t) * sin(k * phase(t)) into out, where the per-sample
/// phase increment is given. Harmonics come from the Chebyshev recurrence
/// sin(k x) = 2 cos(x) sin((k-1) x) - sin((k-2) x).
template <typename AmpFn>
void add_harmonic_series(std::vector<double>& out, const std::vector<double>& phase_inc, std::size_t n_harmonics,
                         AmpFn&& amplitudes_at, double gain = 1.0, const std::vector<double>* gate = nullptr) {
  constexpr std::size_t block = 64;
  std::vector<double> amp(n_harmonics);
  double phase = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (i % block == 0) amplitudes_at(i, amp);
    phase += phase_inc[i];
    if (phase > 2.0 * std::numbers::pi) phase -= 2.0 * std::numbers::pi;
    const double g = gate ? (*gate)[i] : 1.0;
    if (g == 0.0) continue;
    const double s1 = std::sin(phase);
    const double c2 = 2.0 * std::cos(phase);
    double prev = 0.0, cur = s1, acc = amp[0] * s1;
    for (std::size_t k = 1; k < n_harmonics; ++k) {
      const double next = c2 * cur - prev;
      prev = cur;
      cur = next;
      acc += amp[k] * cur;
    }
    out[i] += gain * g * acc;
  }
}

inline double rms(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return x.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(x.size()));
}

}  // namespace detail

/// Renders one synthetic track. Instrumentals are a harmonic bed (3 to 6
/// harmonics with slow amplitude envelopes) plus low-pass filtered noise.
/// Songs add a vibrato voice with a formant-shaped, band-limited spectrum on
/// random intervals.
inline SynthTrack synthesize_track(std::uint64_t track_seed, Label label, double duration_s, double voice_snr_db,
                                   int sample_rate_hz = kCanonicalRateHz) {
  std::mt19937_64 rng(track_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const double sr = sample_rate_hz;
  const auto n = static_cast<std::size_t>(std::llround(duration_s * sr));
  const double two_pi = 2.0 * std::numbers::pi;

  SynthTrack track;
  std::vector<double> bed(n, 0.0);

  // Harmonic bed.
  {
    const double f0 = 55.0 * std::pow(2.0, uni(0.0, std::log2(165.0 / 55.0)));
    const auto n_harm = static_cast<std::size_t>(3 + std::uniform_int_distribution<int>(0, 3)(rng));
    const double tilt = uni(0.5, 1.5);
    std::vector<double> base(n_harm), rate(n_harm), depth(n_harm), theta(n_harm);
    for (std::size_t k = 0; k < n_harm; ++k) {
      base[k] = uni(0.3, 1.0) / std::pow(static_cast<double>(k + 1), tilt);
      rate[k] = uni(0.05, 0.4);
      depth[k] = uni(0.2, 0.6);
      theta[k] = uni(0.0, two_pi);
      if (f0 * static_cast<double>(k + 1) >= 0.45 * sr) base[k] = 0.0;
    }
    std::vector<double> inc(n, two_pi * f0 / sr);
    detail::add_harmonic_series(bed, inc, n_harm, [&](std::size_t i, std::vector<double>& amp) {
      const double t = static_cast<double>(i) / sr;
      for (std::size_t k = 0; k < n_harm; ++k)
        amp[k] = base[k] * (1.0 + depth[k] * std::sin(two_pi * rate[k] * t + theta[k]));
    });
  }

  // Low-pass filtered noise.
  {
    const double cutoff = 300.0 * std::pow(2.0, uni(0.0, std::log2(6000.0 / 300.0)));
    const double level_db = uni(-24.0, -6.0);
    const double a = std::exp(-two_pi * cutoff / sr);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> noise(n);
    double y = 0.0;
    for (auto& v : noise) {
      y = (1.0 - a) * gauss(rng) + a * y;
      v = y;
    }
    const double scale = detail::rms(bed) * std::pow(10.0, level_db / 20.0) / std::max(detail::rms(noise), 1e-12);
    for (std::size_t i = 0; i < n; ++i) bed[i] += scale * noise[i];
  }

  std::vector<double> mix = bed;
  if (label == Label::Song) {
    track.annotation = detail::random_voiced_intervals(rng, duration_s);

    // Gate with 30 ms raised-cosine ramps inside each interval.
    std::vector<double> gate(n, 0.0);
    const double ramp = 0.03 * sr;
    for (const auto& iv : track.annotation.intervals) {
      const auto s = static_cast<std::size_t>(std::ceil(iv.start_s * sr));
      const auto e = std::min(n, static_cast<std::size_t>(std::ceil(iv.end_s * sr)));
      for (std::size_t i = s; i < e; ++i) {
        const double from_edge = std::min(static_cast<double>(i - s), static_cast<double>(e - 1 - i));
        gate[i] = from_edge >= ramp ? 1.0 : 0.5 - 0.5 * std::cos(std::numbers::pi * from_edge / ramp);
      }
    }

    // Melody: notes of 0.25-0.7 s on a semitone grid, each with its own vowel.
    // F1-F3 of /a e i o u/ for a mid voice.
    static constexpr std::array<std::array<double, 3>, 5> kVowels{{
        {800.0, 1150.0, 2900.0}, {400.0, 1600.0, 2700.0}, {350.0, 1700.0, 2700.0},
        {450.0, 800.0, 2830.0}, {325.0, 700.0, 2530.0}}};
    struct Note {
      std::size_t end;
      double freq;
      double formant[3];
      double bandwidth[3];
    };
    std::vector<Note> notes;
    const double register_hz = uni(165.0, 330.0);
    for (std::size_t t = 0; t < n;) {
      Note note{};
      note.end = std::min(n, t + static_cast<std::size_t>(uni(0.25, 0.7) * sr));
      note.freq = register_hz * std::pow(2.0, std::uniform_int_distribution<int>(-5, 7)(rng) / 12.0);
      const auto& v = kVowels[std::uniform_int_distribution<std::size_t>(0, kVowels.size() - 1)(rng)];
      for (int m = 0; m < 3; ++m) {
        note.formant[m] = v[m] * uni(0.95, 1.05);
        note.bandwidth[m] = uni(80.0, 160.0);
      }
      notes.push_back(note);
      t = note.end;
    }
    const double vib_rate = uni(5.0, 7.0);
    const double vib_phase = uni(0.0, two_pi);
    constexpr double vib_cents = 30.0;

    std::vector<double> inc(n);
    std::vector<std::size_t> note_of(n);
    for (std::size_t i = 0, j = 0; i < n; ++i) {
      while (notes[j].end <= i) ++j;
      note_of[i] = j;
      const double t = static_cast<double>(i) / sr;
      const double f = notes[j].freq * std::pow(2.0, vib_cents / 1200.0 * std::sin(two_pi * vib_rate * t + vib_phase));
      inc[i] = two_pi * f / sr;
    }
    constexpr double band_lo = 100.0, band_hi = 4500.0;
    const auto n_harm = static_cast<std::size_t>(band_hi / (register_hz * std::pow(2.0, -5.0 / 12.0))) + 1;
    std::vector<double> voice(n, 0.0);
    detail::add_harmonic_series(
        voice, inc, n_harm,
        [&](std::size_t i, std::vector<double>& amp) {
          const Note& note = notes[note_of[i]];
          const double f = inc[i] * sr / two_pi;
          for (std::size_t k = 0; k < n_harm; ++k) {
            const double fk = f * static_cast<double>(k + 1);
            if (fk < band_lo || fk > band_hi) {
              amp[k] = 0.0;
              continue;
            }
            double a = 0.02;
            for (int m = 0; m < 3; ++m) {
              const double z = (fk - note.formant[m]) / note.bandwidth[m];
              a += (m == 0 ? 1.0 : m == 1 ? 0.6 : 0.3) * std::exp(-0.5 * z * z);
            }
            amp[k] = a / std::sqrt(static_cast<double>(k + 1));
          }
        },
        1.0, &gate);

    double active_energy = 0.0;
    std::size_t active = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (gate[i] > 0.0) {
        active_energy += voice[i] * voice[i];
        ++active;
      }
    }
    const double voice_rms = active ? std::sqrt(active_energy / static_cast<double>(active)) : 0.0;
    if (voice_rms > 0.0) {
      const double scale = detail::rms(bed) * std::pow(10.0, voice_snr_db / 20.0) / voice_rms;
      for (std::size_t i = 0; i < n; ++i) mix[i] += scale * voice[i];
    }
  }

  double peak = 0.0;
  for (double v : mix) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (double& v : mix) v *= 0.9 / peak;
  track.samples = std::move(mix);
  return track;
}

/// Synthetic ISRC with the reserved ZZSYN prefix: ZZ + SYN + year 00 + index.
inline std::string synthetic_isrc(std::size_t index) {
  if (index > 99999) throw Error(ErrorCode::Invalid, "synthetic corpus limited to 100000 tracks");
  char buf[16];
  std::snprintf(buf, sizeof buf, "ZZSYN00%05zu", index);
  return buf;
}

/// Writes audio/<isrc>.wav, annotations/<isrc>.txt (Songs only) and
/// manifest.csv under out_dir, and returns the manifest.
inline CorpusManifest generate_synthetic_corpus(const SynthConfig& cfg, const std::filesystem::path& out_dir,
                                                unsigned jobs = 0) {
  if (cfg.duration_s < 5.0) throw Error(ErrorCode::Invalid, "synthetic duration must be at least 5 s");
  if (cfg.sample_rate_hz <= 0) throw Error(ErrorCode::Invalid, "sample rate must be positive");
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "audio", ec);
  if (!ec) std::filesystem::create_directories(out_dir / "annotations", ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create output directory " + out_dir.string() + ": " + ec.message());

  CorpusManifest manifest;
  manifest.base_dir = out_dir;
  auto add = [&](std::size_t count, Label label, Split split) {
    for (std::size_t i = 0; i < count; ++i) {
      TrackRecord rec;
      rec.isrc = synthetic_isrc(manifest.records.size() + 1);
      rec.label = label;
      rec.split = split;
      rec.audio_path = "audio/" + rec.isrc + ".wav";
      if (label == Label::Song) rec.annotation_path = "annotations/" + rec.isrc + ".txt";
      manifest.records.push_back(std::move(rec));
    }
  };
  add(cfg.n_songs, Label::Song, Split::Train);
  add(cfg.n_instrumentals, Label::Instrumental, Split::Train);
  add(cfg.test_songs, Label::Song, Split::Test);
  add(cfg.test_instrumentals, Label::Instrumental, Split::Test);

  parallel_for(manifest.records.size(), jobs, [&](std::size_t i) {
    const auto& rec = manifest.records[i];
    const auto track = synthesize_track(derive_seed(cfg.seed, "synth-track", i), rec.label, cfg.duration_s,
                                        cfg.voice_snr_db, cfg.sample_rate_hz);
    write_wav16(manifest.resolve(rec.audio_path), track.samples, cfg.sample_rate_hz);
    if (rec.annotation_path) {
      std::ofstream out(manifest.resolve(*rec.annotation_path), std::ios::trunc);
      if (!out) throw Error(ErrorCode::Io, "cannot write annotation for " + rec.isrc);
      out << format_annotation(track.annotation);
    }
  });
  write_manifest(manifest, out_dir / "manifest.csv");
  return manifest;
}

}  // namespace sictag
