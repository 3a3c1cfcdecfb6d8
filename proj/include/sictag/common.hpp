#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace sictag {

/// Error categories. The CLI prints the code so scripts can match on it.
enum class ErrorCode {
  Io,
  Parse,
  Invalid,
  DuplicateIsrc,
  UnknownLabel,
  Overlap,
  UnsupportedFormat,
  Truncated,
  EmptyAudio,
  TooShort,
  SingleClass,
  EmptyInput,
  DimensionMismatch,
  Degenerate,
  InsufficientData,
  Leakage,
  SchemaMismatch,
  MissingArtifact,
  StaleCache,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io: return "io";
    case ErrorCode::Parse: return "parse";
    case ErrorCode::Invalid: return "invalid";
    case ErrorCode::DuplicateIsrc: return "duplicate_isrc";
    case ErrorCode::UnknownLabel: return "unknown_label";
    case ErrorCode::Overlap: return "overlap";
    case ErrorCode::UnsupportedFormat: return "unsupported_format";
    case ErrorCode::Truncated: return "truncated";
    case ErrorCode::EmptyAudio: return "empty_audio";
    case ErrorCode::TooShort: return "too_short";
    case ErrorCode::SingleClass: return "single_class";
    case ErrorCode::EmptyInput: return "empty_input";
    case ErrorCode::DimensionMismatch: return "dimension_mismatch";
    case ErrorCode::Degenerate: return "degenerate";
    case ErrorCode::InsufficientData: return "insufficient_data";
    case ErrorCode::Leakage: return "leakage";
    case ErrorCode::SchemaMismatch: return "schema_mismatch";
    case ErrorCode::MissingArtifact: return "missing_artifact";
    case ErrorCode::StaleCache: return "stale_cache";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Track-level class. Song means at least one singing voice is present.
enum class Label : std::uint8_t { Song = 0, Instrumental = 1 };

inline std::string_view to_string(Label label) {
  return label == Label::Song ? "Song" : "Instrumental";
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline Label parse_label(std::string_view text) {
  const std::string lowered = to_lower(trim(text));
  if (lowered == "song") return Label::Song;
  if (lowered == "instrumental") return Label::Instrumental;
  throw Error(ErrorCode::UnknownLabel, "unknown label '" + std::string(text) + "'");
}

inline Label other(Label label) {
  return label == Label::Song ? Label::Instrumental : Label::Song;
}

inline std::size_t index_of(Label label) { return static_cast<std::size_t>(label); }

// ---------------------------------------------------------------------------
// Seeds. All randomness fans out from one top-level seed by hashing a purpose
// string (and optional index) into it, so each consumer is independently
// replayable.

inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose, std::uint64_t index = 0) {
  return splitmix64(splitmix64(seed ^ fnv1a64(purpose)) + index);
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

// ---------------------------------------------------------------------------

/// Number of workers used when a caller passes jobs == 0.
inline unsigned default_jobs() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Work is handed out in
/// strided order, so the result never depends on scheduling as long as fn(i)
/// only writes to slot i. The first exception thrown is rethrown.
inline void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs == 0) jobs = default_jobs();
  const std::size_t workers = std::min<std::size_t>(jobs, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += workers) fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace sictag
