#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "sictag/common.hpp"
#include "sictag/track_model.hpp"

namespace sictag {

inline constexpr std::size_t kDefaultPlaylistCap = 1000;

struct Playlist {
  Label tag = Label::Instrumental;
  std::vector<std::string> entries;
  std::size_t cap = kDefaultPlaylistCap;
};

/// Margin pointing toward `tag`: positive means the prediction leans to it.
inline double margin_toward(const TrackPrediction& p, Label tag) {
  return tag == Label::Instrumental ? p.margin : -p.margin;
}

/// Keeps predictions labelled `tag` whose margin toward it exceeds
/// min_margin, strongest first (ISRC breaks ties), truncated to cap.
inline Playlist generate_playlist(std::span<const TrackPrediction> predictions, Label tag,
                                  std::size_t cap = kDefaultPlaylistCap, double min_margin = 0.0) {
  if (cap == 0) throw Error(ErrorCode::Invalid, "playlist cap must be at least 1");
  std::vector<const TrackPrediction*> keep;
  std::unordered_set<std::string_view> seen;
  for (const auto& p : predictions)
    if (p.predicted_label == tag && margin_toward(p, tag) > min_margin) keep.push_back(&p);
  std::sort(keep.begin(), keep.end(), [&](const TrackPrediction* a, const TrackPrediction* b) {
    const double ma = margin_toward(*a, tag), mb = margin_toward(*b, tag);
    if (ma != mb) return ma > mb;
    return a->isrc < b->isrc;
  });
  Playlist pl;
  pl.tag = tag;
  pl.cap = cap;
  for (const auto* p : keep) {
    if (pl.entries.size() >= cap) break;
    if (seen.insert(p->isrc).second) pl.entries.push_back(p->isrc);
  }
  return pl;
}

inline std::string format_playlist(const Playlist& pl) {
  std::string out = "# tag=" + to_lower(to_string(pl.tag)) + " cap=" + std::to_string(pl.cap) + "\n";
  for (const auto& isrc : pl.entries) out += isrc + "\n";
  return out;
}

inline void write_playlist(const Playlist& pl, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write playlist " + path.string());
  out << format_playlist(pl);
}

}  // namespace sictag
