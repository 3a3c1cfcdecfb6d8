#pragma once

#include <fftw3.h>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sictag/common.hpp"
#include "sictag/wav.hpp"

namespace sictag {

/// Analysis framing. Defaults give ~92.9 ms frames with 50% overlap at 22050 Hz.
struct FrameSpec {
  std::size_t frame_len = 2048;
  std::size_t hop = 1024;

  void validate() const {
    if (hop == 0 || hop > frame_len) throw Error(ErrorCode::Invalid, "frame spec requires 0 < hop <= frame_len");
  }

  std::size_t frame_count(std::size_t n_samples) const {
    return n_samples < frame_len ? 0 : (n_samples - frame_len) / hop + 1;
  }
};

struct MfccConfig {
  std::size_t n_mels = 40;
  std::size_t n_coeffs = 13;  // coefficients 1..n_coeffs; c0 is dropped
  double fmin_hz = 64.0;
  double fmax_hz = 0.0;  // 0 means Nyquist
  double log_floor = 1e-10;

  double resolved_fmax(int sample_rate_hz) const { return fmax_hz > 0.0 ? fmax_hz : sample_rate_hz / 2.0; }

  void validate(int sample_rate_hz) const {
    const double fmax = resolved_fmax(sample_rate_hz);
    if (!(fmin_hz >= 0.0 && fmin_hz < fmax && fmax <= sample_rate_hz / 2.0))
      throw Error(ErrorCode::Invalid, "mfcc config requires 0 <= fmin < fmax <= Nyquist");
    if (n_coeffs == 0 || n_coeffs >= n_mels) throw Error(ErrorCode::Invalid, "mfcc config requires 0 < n_coeffs < n_mels");
    if (!(log_floor > 0.0)) throw Error(ErrorCode::Invalid, "log floor must be positive");
  }
};

/// Row-major real matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

inline constexpr std::size_t kMfccDim = 13;
inline constexpr std::size_t kFrameFeatureDim = 3 * kMfccDim;

/// Per-frame features: columns [MFCC 1..13 | delta | delta-delta].
struct FeatureMatrix {
  Matrix values;
  std::vector<double> frame_times_s;  // frame centres

  std::size_t rows() const { return values.rows; }
  std::size_t cols() const { return values.cols; }
};

// ---------------------------------------------------------------------------

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular filters on the HTK mel scale, evaluated at the FFT bin
/// frequencies. Shape n_mels x (n_fft/2 + 1).
inline Matrix mel_filterbank(std::size_t n_fft, int sample_rate_hz, const MfccConfig& cfg) {
  cfg.validate(sample_rate_hz);
  const std::size_t n_bins = n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.resolved_fmax(sample_rate_hz));
  std::vector<double> edges(cfg.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));

  Matrix fb(cfg.n_mels, n_bins);
  const double bin_hz = static_cast<double>(sample_rate_hz) / static_cast<double>(n_fft);
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[m], centre = edges[m + 1], hi = edges[m + 2];
    double sum = 0.0;
    for (std::size_t b = 0; b < n_bins; ++b) {
      const double f = static_cast<double>(b) * bin_hz;
      const double w = std::max(0.0, std::min((f - lo) / (centre - lo), (hi - f) / (hi - centre)));
      fb(m, b) = w;
      sum += w;
    }
    // Narrow low filters can fall between bins; give them the nearest bin.
    if (sum == 0.0) {
      const auto nearest = static_cast<std::size_t>(std::lround(centre / bin_hz));
      fb(m, std::min(nearest, n_bins - 1)) = 1.0;
    }
  }
  return fb;
}

/// Orthonormal DCT-II basis, n x n: B(k, i) = s_k cos(pi k (2i + 1) / 2n).
inline Matrix dct2_basis(std::size_t n) {
  Matrix b(n, n);
  const double dn = static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / dn) : std::sqrt(2.0 / dn);
    for (std::size_t i = 0; i < n; ++i)
      b(k, i) = scale * std::cos(std::numbers::pi * static_cast<double>(k) * (2.0 * static_cast<double>(i) + 1.0) / (2.0 * dn));
  }
  return b;
}

/// Periodic Hann window.
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

namespace detail {

// FFTW planning is not thread-safe; executing an existing plan on new
// arrays is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwPlanDeleter {
  void operator()(fftw_plan_s* p) const {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(p);
  }
};

}  // namespace detail

/// Precomputes window, filterbank, DCT and FFT plan for one configuration.
/// Immutable after construction; compute() may be called from many threads.
class MfccExtractor {
 public:
  MfccExtractor(int sample_rate_hz, FrameSpec spec = {}, MfccConfig cfg = {})
      : rate_(sample_rate_hz), spec_(spec), cfg_(cfg) {
    spec_.validate();
    cfg_.validate(rate_);
    window_ = hann_window(spec_.frame_len);
    filterbank_ = mel_filterbank(spec_.frame_len, rate_, cfg_);
    dct_ = dct2_basis(cfg_.n_mels);
    std::vector<double> in(spec_.frame_len);
    std::vector<fftw_complex> out(spec_.frame_len / 2 + 1);
    std::lock_guard lock(detail::fftw_planner_mutex());
    plan_.reset(fftw_plan_dft_r2c_1d(static_cast<int>(spec_.frame_len), in.data(), out.data(),
                                     FFTW_ESTIMATE | FFTW_UNALIGNED));
    if (!plan_) throw Error(ErrorCode::Invalid, "fftw plan creation failed");
  }

  const FrameSpec& frame_spec() const { return spec_; }
  const MfccConfig& config() const { return cfg_; }
  int sample_rate_hz() const { return rate_; }
  const Matrix& filterbank() const { return filterbank_; }

  /// MFCC 1..n_coeffs per frame, shape frames x n_coeffs.
  Matrix compute(const AudioClip& clip) const {
    if (clip.sample_rate_hz != rate_)
      throw Error(ErrorCode::Invalid, "clip sample rate " + std::to_string(clip.sample_rate_hz) +
                                          " does not match extractor rate " + std::to_string(rate_));
    const std::size_t frames = spec_.frame_count(clip.samples.size());
    if (frames == 0)
      throw Error(ErrorCode::TooShort, "clip of " + std::to_string(clip.samples.size()) +
                                           " samples is shorter than one frame");
    const std::size_t n_bins = spec_.frame_len / 2 + 1;
    std::vector<double> buf(spec_.frame_len);
    std::vector<fftw_complex> spec(n_bins);
    std::vector<double> power(n_bins), logmel(cfg_.n_mels);
    Matrix out(frames, cfg_.n_coeffs);
    for (std::size_t f = 0; f < frames; ++f) {
      const double* x = clip.samples.data() + f * spec_.hop;
      for (std::size_t i = 0; i < spec_.frame_len; ++i) buf[i] = x[i] * window_[i];
      fftw_execute_dft_r2c(plan_.get(), buf.data(), spec.data());
      for (std::size_t b = 0; b < n_bins; ++b) power[b] = spec[b][0] * spec[b][0] + spec[b][1] * spec[b][1];
      for (std::size_t m = 0; m < cfg_.n_mels; ++m) {
        const auto w = filterbank_.row(m);
        double e = 0.0;
        for (std::size_t b = 0; b < n_bins; ++b) e += w[b] * power[b];
        logmel[m] = std::log(std::max(e, cfg_.log_floor));
      }
      for (std::size_t c = 0; c < cfg_.n_coeffs; ++c) {
        const auto basis = dct_.row(c + 1);
        double acc = 0.0;
        for (std::size_t m = 0; m < cfg_.n_mels; ++m) acc += basis[m] * logmel[m];
        out(f, c) = acc;
      }
    }
    return out;
  }

  std::vector<double> frame_times(std::size_t frames) const {
    std::vector<double> t(frames);
    for (std::size_t f = 0; f < frames; ++f)
      t[f] = (static_cast<double>(f * spec_.hop) + static_cast<double>(spec_.frame_len) / 2.0) / rate_;
    return t;
  }

  /// Full 39-column feature matrix for a clip.
  FeatureMatrix features(const AudioClip& clip) const;

 private:
  int rate_;
  FrameSpec spec_;
  MfccConfig cfg_;
  std::vector<double> window_;
  Matrix filterbank_;
  Matrix dct_;
  std::unique_ptr<fftw_plan_s, detail::FftwPlanDeleter> plan_;
};

inline Matrix compute_mfcc(const AudioClip& clip, const FrameSpec& spec = {}, const MfccConfig& cfg = {}) {
  return MfccExtractor(clip.sample_rate_hz, spec, cfg).compute(clip);
}

/// Regression deltas over +/-window frames with edge replication.
inline Matrix regression_deltas(const Matrix& x, std::size_t window = 2) {
  Matrix d(x.rows, x.cols);
  if (x.rows == 0 || window == 0) return d;
  double denom = 0.0;
  for (std::size_t k = 1; k <= window; ++k) denom += static_cast<double>(k * k);
  denom *= 2.0;
  const auto last = static_cast<std::ptrdiff_t>(x.rows) - 1;
  auto clamp_row = [&](std::ptrdiff_t r) { return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(r, 0, last)); };
  for (std::size_t t = 0; t < x.rows; ++t) {
    for (std::size_t c = 0; c < x.cols; ++c) {
      double acc = 0.0;
      for (std::size_t k = 1; k <= window; ++k) {
        const auto kk = static_cast<std::ptrdiff_t>(k);
        const auto tt = static_cast<std::ptrdiff_t>(t);
        acc += static_cast<double>(k) * (x(clamp_row(tt + kk), c) - x(clamp_row(tt - kk), c));
      }
      d(t, c) = acc / denom;
    }
  }
  return d;
}

/// Stacks [mfcc | delta | delta-delta]. Frame times are left empty; callers
/// that know the framing fill them in.
inline FeatureMatrix append_deltas(const Matrix& mfcc, std::size_t window = 2) {
  const Matrix d1 = regression_deltas(mfcc, window);
  const Matrix d2 = regression_deltas(d1, window);
  FeatureMatrix fm;
  fm.values = Matrix(mfcc.rows, 3 * mfcc.cols);
  for (std::size_t r = 0; r < mfcc.rows; ++r) {
    auto out = fm.values.row(r);
    std::copy_n(mfcc.row(r).begin(), mfcc.cols, out.begin());
    std::copy_n(d1.row(r).begin(), mfcc.cols, out.begin() + static_cast<std::ptrdiff_t>(mfcc.cols));
    std::copy_n(d2.row(r).begin(), mfcc.cols, out.begin() + static_cast<std::ptrdiff_t>(2 * mfcc.cols));
  }
  return fm;
}

inline FeatureMatrix MfccExtractor::features(const AudioClip& clip) const {
  FeatureMatrix fm = append_deltas(compute(clip));
  fm.frame_times_s = frame_times(fm.rows());
  return fm;
}

// ---------------------------------------------------------------------------
// Feature cache: <cache>/<isrc>.feat, text. First line carries the config
// fingerprint so a cache written under different framing is detected.

inline std::string dsp_fingerprint(int sample_rate_hz, const FrameSpec& spec, const MfccConfig& cfg) {
  std::ostringstream s;
  s.precision(17);
  s << "rate=" << sample_rate_hz << ";frame_len=" << spec.frame_len << ";hop=" << spec.hop << ";n_mels=" << cfg.n_mels
    << ";n_coeffs=" << cfg.n_coeffs << ";fmin=" << cfg.fmin_hz << ";fmax=" << cfg.resolved_fmax(sample_rate_hz)
    << ";log_floor=" << cfg.log_floor << ";delta_window=2";
  return hex64(fnv1a64(s.str()));
}

inline constexpr std::string_view kFeatureCacheSchema = "sictag-feat/1";

inline void write_feature_cache(const std::filesystem::path& path, const FeatureMatrix& fm,
                                const std::string& fingerprint) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write feature cache " + path.string());
  out << kFeatureCacheSchema << " dsp=" << fingerprint << '\n' << fm.rows() << ' ' << fm.cols() << '\n';
  char buf[32];
  for (std::size_t r = 0; r < fm.rows(); ++r) {
    auto res = std::to_chars(buf, buf + sizeof buf, fm.frame_times_s[r]);
    out.write(buf, res.ptr - buf);
    for (double v : fm.values.row(r)) {
      out.put(' ');
      res = std::to_chars(buf, buf + sizeof buf, v);
      out.write(buf, res.ptr - buf);
    }
    out.put('\n');
  }
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

/// Reads the fingerprint line of a cache file, or nullopt if absent.
inline std::optional<std::string> read_feature_cache_fingerprint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::string schema, dsp;
  in >> schema >> dsp;
  if (schema != kFeatureCacheSchema || dsp.rfind("dsp=", 0) != 0) return std::nullopt;
  return dsp.substr(4);
}

/// Loads a cache file. Returns nullopt when missing or written under a
/// different fingerprint.
inline std::optional<FeatureMatrix> read_feature_cache(const std::filesystem::path& path,
                                                       const std::string& fingerprint) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::string schema, dsp;
  in >> schema >> dsp;
  if (schema != kFeatureCacheSchema || dsp != "dsp=" + fingerprint) return std::nullopt;
  std::size_t rows = 0, cols = 0;
  in >> rows >> cols;
  if (!in) throw Error(ErrorCode::Parse, path.string() + ": bad shape line");
  FeatureMatrix fm;
  fm.values = Matrix(rows, cols);
  fm.frame_times_s.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    in >> fm.frame_times_s[r];
    for (double& v : fm.values.row(r)) in >> v;
  }
  if (!in) throw Error(ErrorCode::Truncated, path.string() + ": truncated feature cache");
  return fm;
}

}  // namespace sictag
