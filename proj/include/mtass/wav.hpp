// Copyright 2026 The mtass Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtass/audio.hpp"

namespace mtass {

class WavError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class WavFormat { kPcm16, kFloat32 };

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 |
         std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}
inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}
inline void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

}  // namespace detail

// Reads a mono PCM (16/24/32-bit) or IEEE float (32-bit) RIFF/WAVE file.
inline AudioClip read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WavError("cannot open " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw WavError(path + ": not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const unsigned char* chunk = buf.data() + pos;
    const std::uint32_t size = detail::read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + 16 > buf.size()) throw WavError(path + ": bad fmt chunk");
      format = detail::read_u16(buf.data() + body);
      channels = detail::read_u16(buf.data() + body + 2);
      rate = detail::read_u32(buf.data() + body + 4);
      bits = detail::read_u16(buf.data() + body + 14);
      if (format == 0xFFFE && size >= 26)  // WAVE_FORMAT_EXTENSIBLE
        format = detail::read_u16(buf.data() + body + 24);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = buf.data() + body;
      data_size = std::min<std::size_t>(size, buf.size() - body);
    }
    pos = body + size + (size & 1);
  }
  if (channels == 0 || data == nullptr) throw WavError(path + ": missing fmt or data chunk");
  if (channels != 1)
    throw WavError(path + ": " + std::to_string(channels) +
                   " channels; only mono audio is supported");
  if (rate == 0) throw WavError(path + ": zero sample rate");

  std::vector<double> samples;
  if (format == 1 && (bits == 16 || bits == 24 || bits == 32)) {
    const std::size_t bps = bits / 8;
    const std::size_t n = data_size / bps;
    samples.resize(n);
    const double scale = std::ldexp(1.0, -(bits - 1));
    for (std::size_t i = 0; i < n; ++i) {
      const unsigned char* p = data + i * bps;
      std::int32_t v = 0;
      if (bits == 16) v = static_cast<std::int16_t>(detail::read_u16(p));
      else if (bits == 24) v = static_cast<std::int32_t>((p[0] << 8) | (p[1] << 16) | (p[2] << 24)) >> 8;
      else v = static_cast<std::int32_t>(detail::read_u32(p));
      samples[i] = v * scale;
    }
  } else if (format == 3 && bits == 32) {
    const std::size_t n = data_size / 4;
    samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t u = detail::read_u32(data + i * 4);
      float f;
      std::memcpy(&f, &u, 4);
      samples[i] = f;
    }
  } else {
    throw WavError(path + ": unsupported encoding (format " + std::to_string(format) +
                   ", " + std::to_string(bits) + " bits)");
  }
  AudioClip clip(std::move(samples), static_cast<int>(rate));
  for (double v : clip.samples)
    if (!std::isfinite(v)) throw WavError(path + ": non-finite sample");
  return clip;
}

inline void write_wav(const std::string& path, const AudioClip& clip,
                      WavFormat fmt = WavFormat::kFloat32) {
  clip.validate();
  const bool pcm = fmt == WavFormat::kPcm16;
  const std::uint16_t bits = pcm ? 16 : 32;
  const std::uint32_t data_bytes =
      static_cast<std::uint32_t>(clip.size() * (bits / 8));
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  detail::put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  detail::put_u32(out, 16);
  detail::put_u16(out, pcm ? 1 : 3);
  detail::put_u16(out, 1);
  detail::put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  detail::put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * (bits / 8));
  detail::put_u16(out, bits / 8);
  detail::put_u16(out, bits);
  out += "data";
  detail::put_u32(out, data_bytes);
  for (double v : clip.samples) {
    if (pcm) {
      // Same 2^15 scale as the reader; +1.0 saturates at 32767.
      const long s = std::clamp(std::lround(std::clamp(v, -1.0, 1.0) * 32768.0), -32768L, 32767L);
      detail::put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(s)));
    } else {
      const float f = static_cast<float>(v);
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      detail::put_u32(out, u);
    }
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw WavError("cannot write " + path);
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!os) throw WavError("write failed: " + path);
}

}  // namespace mtass
