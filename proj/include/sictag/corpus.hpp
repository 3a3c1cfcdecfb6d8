#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sictag/common.hpp"
#include "sictag/wav.hpp"

namespace sictag {

enum class Split : std::uint8_t { Train, Test };

inline std::string_view to_string(Split split) { return split == Split::Train ? "train" : "test"; }

inline Split parse_split(std::string_view text) {
  const std::string lowered = to_lower(trim(text));
  if (lowered == "train") return Split::Train;
  if (lowered == "test") return Split::Test;
  throw Error(ErrorCode::Parse, "unknown split '" + std::string(text) + "'");
}

/// ISRC: 2 country letters, 3 alphanumeric registrant chars, 2-digit year,
/// 5-digit designation. Upper case only.
inline bool is_valid_isrc(std::string_view isrc) {
  if (isrc.size() != 12) return false;
  auto upper = [](char c) { return c >= 'A' && c <= 'Z'; };
  auto digit = [](char c) { return c >= '0' && c <= '9'; };
  for (std::size_t i = 0; i < 2; ++i)
    if (!upper(isrc[i])) return false;
  for (std::size_t i = 2; i < 5; ++i)
    if (!upper(isrc[i]) && !digit(isrc[i])) return false;
  for (std::size_t i = 5; i < 12; ++i)
    if (!digit(isrc[i])) return false;
  return true;
}

struct TrackRecord {
  std::string isrc;
  Label label = Label::Song;
  Split split = Split::Train;
  std::string audio_path;
  std::optional<std::string> annotation_path;

  friend bool operator==(const TrackRecord&, const TrackRecord&) = default;
};

struct CorpusManifest {
  std::vector<TrackRecord> records;
  /// Directory relative paths are resolved against.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::string& relative) const {
    const std::filesystem::path p(relative);
    return p.is_absolute() ? p : base_dir / p;
  }

  std::vector<TrackRecord> subset(Split split) const {
    std::vector<TrackRecord> out;
    for (const auto& r : records)
      if (r.split == split) out.push_back(r);
    return out;
  }
};

inline constexpr std::string_view kManifestHeader = "isrc,label,split,audio_path,annotation_path";

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

}  // namespace detail

inline CorpusManifest parse_manifest(std::istream& in, const std::filesystem::path& base_dir,
                                     const std::string& name = "<manifest>") {
  CorpusManifest manifest;
  manifest.base_dir = base_dir;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::Parse, name + ": empty manifest");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (trim(line) != kManifestHeader)
    throw Error(ErrorCode::Parse, name + ": row 1: expected header '" + std::string(kManifestHeader) + "'");

  std::unordered_set<std::string> seen;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = detail::split_csv_line(line);
    const std::string where = name + ": row " + std::to_string(row);
    if (fields.size() != 5)
      throw Error(ErrorCode::Parse, where + ": expected 5 fields, got " + std::to_string(fields.size()));
    TrackRecord rec;
    rec.isrc = std::string(trim(fields[0]));
    if (!is_valid_isrc(rec.isrc)) throw Error(ErrorCode::Parse, where + ": malformed ISRC '" + rec.isrc + "'");
    try {
      rec.label = parse_label(fields[1]);
      rec.split = parse_split(fields[2]);
    } catch (const Error& e) {
      throw Error(e.code(), where + ": " + e.what());
    }
    rec.audio_path = std::string(trim(fields[3]));
    if (rec.audio_path.empty()) throw Error(ErrorCode::Parse, where + ": empty audio_path");
    const auto ann = trim(fields[4]);
    if (!ann.empty()) rec.annotation_path = std::string(ann);
    if (!seen.insert(rec.isrc).second)
      throw Error(ErrorCode::DuplicateIsrc, where + ": duplicate ISRC " + rec.isrc);
    manifest.records.push_back(std::move(rec));
  }
  return manifest;
}

inline CorpusManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open manifest " + path.string());
  return parse_manifest(in, path.parent_path(), path.string());
}

inline std::string format_manifest(const CorpusManifest& manifest) {
  std::string out(kManifestHeader);
  out += '\n';
  for (const auto& r : manifest.records) {
    out += r.isrc;
    out += ',';
    out += to_string(r.label);
    out += ',';
    out += to_string(r.split);
    out += ',';
    out += r.audio_path;
    out += ',';
    out += r.annotation_path.value_or("");
    out += '\n';
  }
  return out;
}

inline void write_manifest(const CorpusManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write manifest " + path.string());
  out << format_manifest(manifest);
}

// ---------------------------------------------------------------------------
// Vocal activity annotations: one voiced interval per line, "start end" in
// seconds. Intervals are half-open [start, end).

struct VoicedInterval {
  double start_s = 0.0;
  double end_s = 0.0;
  friend bool operator==(const VoicedInterval&, const VoicedInterval&) = default;
};

struct VocalActivityAnnotation {
  std::vector<VoicedInterval> intervals;

  double voiced_duration_s() const {
    double total = 0.0;
    for (const auto& iv : intervals) total += iv.end_s - iv.start_s;
    return total;
  }
};

/// Sorts and validates intervals: 0 <= start < end, no overlap. Touching
/// intervals ([a,b) followed by [b,c)) are allowed.
inline void normalize_annotation(VocalActivityAnnotation& ann, const std::string& name = "<annotation>") {
  for (const auto& iv : ann.intervals) {
    if (!(iv.start_s >= 0.0) || !(iv.start_s < iv.end_s))
      throw Error(ErrorCode::Invalid, name + ": inverted or negative interval " + std::to_string(iv.start_s) +
                                          " " + std::to_string(iv.end_s));
  }
  std::sort(ann.intervals.begin(), ann.intervals.end(),
            [](const VoicedInterval& a, const VoicedInterval& b) { return a.start_s < b.start_s; });
  for (std::size_t i = 1; i < ann.intervals.size(); ++i) {
    if (ann.intervals[i].start_s < ann.intervals[i - 1].end_s)
      throw Error(ErrorCode::Overlap, name + ": interval starting at " + std::to_string(ann.intervals[i].start_s) +
                                          " overlaps the previous one");
  }
}

inline VocalActivityAnnotation parse_annotation(std::istream& in, const std::string& name = "<annotation>") {
  VocalActivityAnnotation ann;
  std::string line;
  std::size_t lineno = 0;
  auto parse_number = [&](std::string_view tok) {
    double v = 0.0;
    const auto* end = tok.data() + tok.size();
    const auto res = std::from_chars(tok.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end)
      throw Error(ErrorCode::Parse, name + ": line " + std::to_string(lineno) + ": non-numeric field '" +
                                        std::string(tok) + "'");
    return v;
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    std::istringstream fields{std::string(body)};
    std::string a, b, extra;
    fields >> a >> b;
    if (a.empty() || b.empty() || (fields >> extra))
      throw Error(ErrorCode::Parse, name + ": line " + std::to_string(lineno) + ": expected 'start end'");
    ann.intervals.push_back({parse_number(a), parse_number(b)});
  }
  normalize_annotation(ann, name);
  return ann;
}

inline VocalActivityAnnotation load_annotation(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open annotation " + path.string());
  return parse_annotation(in, path.string());
}

/// Checks the end <= duration invariant against a decoded track.
inline void check_annotation_duration(const VocalActivityAnnotation& ann, double duration_s,
                                      const std::string& name = "<annotation>") {
  // one sample of slack absorbs resampling round-off
  constexpr double slack = 1.0 / kCanonicalRateHz;
  if (!ann.intervals.empty() && ann.intervals.back().end_s > duration_s + slack)
    throw Error(ErrorCode::Invalid, name + ": interval ends at " + std::to_string(ann.intervals.back().end_s) +
                                        " s, past track end " + std::to_string(duration_s) + " s");
}

inline std::string format_annotation(const VocalActivityAnnotation& ann) {
  std::string out;
  char buf[64];
  for (const auto& iv : ann.intervals) {
    std::snprintf(buf, sizeof buf, "%.6f %.6f\n", iv.start_s, iv.end_s);
    out += buf;
  }
  return out;
}

/// Loads the annotation attached to a record. Instrumentals yield an empty
/// annotation and must not reference any voiced interval.
inline VocalActivityAnnotation load_record_annotation(const CorpusManifest& manifest, const TrackRecord& rec) {
  if (!rec.annotation_path) return {};
  auto ann = load_annotation(manifest.resolve(*rec.annotation_path));
  if (rec.label == Label::Instrumental && !ann.intervals.empty())
    throw Error(ErrorCode::Invalid, rec.isrc + ": Instrumental track carries voiced intervals");
  return ann;
}

}  // namespace sictag
