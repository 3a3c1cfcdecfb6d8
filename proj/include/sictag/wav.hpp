#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "sictag/common.hpp"

namespace sictag {

/// Mono PCM signal. Samples lie in [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate_hz = 22050;

  double duration_s() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate_hz);
  }
};

inline constexpr int kCanonicalRateHz = 22050;

namespace detail {

inline std::uint32_t read_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u16le(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

}  // namespace detail

/// Decoded WAV content before any resampling, channels already mixed down.
struct DecodedWav {
  std::vector<double> mono;
  int sample_rate_hz = 0;
  int channels = 0;
  int bits_per_sample = 0;
};

/// Decodes an in-memory RIFF/WAVE image. Accepts integer PCM (8/16/24/32 bit)
/// and 32-bit IEEE float, one or two channels. Stereo is mixed by channel mean.
inline DecodedWav decode_wav(std::span<const unsigned char> bytes, const std::string& name = "<memory>") {
  using detail::read_u16le;
  using detail::read_u32le;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw Error(ErrorCode::UnsupportedFormat, name + ": not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32le(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + size > bytes.size())
        throw Error(ErrorCode::Truncated, name + ": truncated fmt chunk");
      const unsigned char* f = bytes.data() + body;
      format = read_u16le(f);
      channels = read_u16le(f + 2);
      rate = read_u32le(f + 4);
      bits = read_u16le(f + 14);
      if (format == 0xFFFE) {
        if (size < 40) throw Error(ErrorCode::Truncated, name + ": truncated extensible fmt chunk");
        format = read_u16le(f + 24);  // first two bytes of the sub-format GUID
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (body + size > bytes.size())
        throw Error(ErrorCode::Truncated, name + ": data chunk extends past end of file");
      data = bytes.data() + body;
      data_size = size;
      break;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw Error(ErrorCode::Truncated, name + ": missing fmt chunk");
  if (data == nullptr) throw Error(ErrorCode::Truncated, name + ": missing data chunk");
  if (channels < 1 || channels > 2)
    throw Error(ErrorCode::UnsupportedFormat, name + ": " + std::to_string(channels) + " channels");
  if (rate == 0) throw Error(ErrorCode::UnsupportedFormat, name + ": zero sample rate");
  const bool is_float = format == 3;
  if (!(format == 1 && (bits == 8 || bits == 16 || bits == 24 || bits == 32)) && !(is_float && bits == 32))
    throw Error(ErrorCode::UnsupportedFormat,
                name + ": format " + std::to_string(format) + " with " + std::to_string(bits) + " bits");

  const std::size_t frame_bytes = static_cast<std::size_t>(bits / 8) * channels;
  if (data_size % frame_bytes != 0)
    throw Error(ErrorCode::Truncated, name + ": partial sample frame at end of data");
  const std::size_t n = data_size / frame_bytes;
  if (n == 0) throw Error(ErrorCode::EmptyAudio, name + ": zero-length audio");

  auto sample_at = [&](const unsigned char* p) -> double {
    switch (bits) {
      case 8: return (static_cast<double>(p[0]) - 128.0) / 128.0;
      case 16: return static_cast<double>(static_cast<std::int16_t>(read_u16le(p))) / 32768.0;
      case 24: {
        std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
        if (v & 0x800000) v -= 0x1000000;
        return static_cast<double>(v) / 8388608.0;
      }
      default: {
        const std::uint32_t raw = read_u32le(p);
        if (is_float) {
          float f;
          std::memcpy(&f, &raw, sizeof f);
          if (!std::isfinite(f)) throw Error(ErrorCode::Invalid, name + ": non-finite float sample");
          return std::clamp(static_cast<double>(f), -1.0, 1.0);
        }
        return static_cast<double>(static_cast<std::int32_t>(raw)) / 2147483648.0;
      }
    }
  };

  DecodedWav out;
  out.sample_rate_hz = static_cast<int>(rate);
  out.channels = channels;
  out.bits_per_sample = bits;
  out.mono.resize(n);
  const std::size_t step = bits / 8;
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* p = data + i * frame_bytes;
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) acc += sample_at(p + c * step);
    out.mono[i] = acc / channels;
  }
  return out;
}

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Linear-interpolation resampler. Output length is round(n * to / from), so
/// duration is preserved to within half an output sample.
inline std::vector<double> resample_linear(std::span<const double> in, int from_hz, int to_hz) {
  if (from_hz <= 0 || to_hz <= 0) throw Error(ErrorCode::Invalid, "sample rates must be positive");
  if (from_hz == to_hz) return {in.begin(), in.end()};
  if (in.empty()) return {};
  const auto out_len = static_cast<std::size_t>(std::max<long long>(
      1, std::llround(static_cast<double>(in.size()) * to_hz / static_cast<double>(from_hz))));
  std::vector<double> out(out_len);
  const double ratio = static_cast<double>(from_hz) / to_hz;
  const std::size_t last = in.size() - 1;
  for (std::size_t j = 0; j < out_len; ++j) {
    const double t = static_cast<double>(j) * ratio;
    const auto i0 = static_cast<std::size_t>(t);
    if (i0 >= last) {
      out[j] = in[last];
      continue;
    }
    const double frac = t - static_cast<double>(i0);
    out[j] = in[i0] * (1.0 - frac) + in[i0 + 1] * frac;
  }
  return out;
}

/// Reads a WAV file, mixes to mono and resamples to target_rate_hz.
inline AudioClip load_audio(const std::filesystem::path& path, int target_rate_hz = kCanonicalRateHz) {
  if (target_rate_hz <= 0) throw Error(ErrorCode::Invalid, "target sample rate must be positive");
  const auto bytes = read_file_bytes(path);
  DecodedWav wav = decode_wav(bytes, path.string());
  AudioClip clip;
  clip.sample_rate_hz = target_rate_hz;
  clip.samples = resample_linear(wav.mono, wav.sample_rate_hz, target_rate_hz);
  return clip;
}

/// Encodes 16-bit PCM. Each channel is a separate span of equal length.
inline std::string encode_wav16(std::span<const std::span<const double>> channels, int sample_rate_hz) {
  using detail::put_u16le;
  using detail::put_u32le;
  if (channels.empty()) throw Error(ErrorCode::Invalid, "no channels to encode");
  const std::size_t n = channels[0].size();
  const auto nch = static_cast<std::uint16_t>(channels.size());
  const std::uint32_t data_size = static_cast<std::uint32_t>(n * nch * 2);
  std::string out;
  out.reserve(44 + data_size);
  out += "RIFF";
  put_u32le(out, 36 + data_size);
  out += "WAVEfmt ";
  put_u32le(out, 16);
  put_u16le(out, 1);
  put_u16le(out, nch);
  put_u32le(out, static_cast<std::uint32_t>(sample_rate_hz));
  put_u32le(out, static_cast<std::uint32_t>(sample_rate_hz) * nch * 2);
  put_u16le(out, static_cast<std::uint16_t>(nch * 2));
  put_u16le(out, 16);
  out += "data";
  put_u32le(out, data_size);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& ch : channels) {
      const double v = std::clamp(ch[i], -1.0, 1.0);
      const auto q = static_cast<std::int16_t>(std::lround(std::clamp(v * 32768.0, -32768.0, 32767.0)));
      put_u16le(out, static_cast<std::uint16_t>(q));
    }
  }
  return out;
}

inline void write_wav16(const std::filesystem::path& path, std::span<const double> mono, int sample_rate_hz) {
  const std::span<const double> chans[1] = {mono};
  const std::string bytes = encode_wav16(chans, sample_rate_hz);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

}  // namespace sictag
