// Copyright 2026 the idlma authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "idlma/core.hpp"

namespace idlma {

/// Multichannel time-domain signal. Samples are stored as an Eigen array
/// with one column per channel; nominal amplitude range is [-1, 1].
struct Waveform {
  Eigen::ArrayXXd samples;  // length x channels
  int sample_rate = 0;

  Eigen::Index length() const { return samples.rows(); }
  Eigen::Index channels() const { return samples.cols(); }

  void validate() const {
    if (sample_rate <= 0) throw ConfigError("waveform sample_rate must be > 0");
    if (samples.cols() < 1) throw ConfigError("waveform needs at least one channel");
  }
};

enum class WavEncoding { pcm16, float32 };

namespace detail {

inline void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline uint16_t get_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

inline uint32_t get_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

}  // namespace detail

/// Writes a little-endian RIFF WAV file (PCM 16-bit or IEEE float 32-bit).
inline void write_wav(const std::string& path, const Waveform& wave,
                      WavEncoding enc = WavEncoding::float32) {
  wave.validate();
  const auto frames = static_cast<uint32_t>(wave.length());
  const auto channels = static_cast<uint16_t>(wave.channels());
  const uint16_t bytes_per_sample = enc == WavEncoding::pcm16 ? 2 : 4;
  const uint16_t block_align = static_cast<uint16_t>(channels * bytes_per_sample);
  const uint32_t data_bytes = frames * block_align;
  const uint16_t format_tag = enc == WavEncoding::pcm16 ? 1 : 3;

  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  detail::put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  detail::put_u32(out, 16);
  detail::put_u16(out, format_tag);
  detail::put_u16(out, channels);
  detail::put_u32(out, static_cast<uint32_t>(wave.sample_rate));
  detail::put_u32(out, static_cast<uint32_t>(wave.sample_rate) * block_align);
  detail::put_u16(out, block_align);
  detail::put_u16(out, static_cast<uint16_t>(8 * bytes_per_sample));
  out += "data";
  detail::put_u32(out, data_bytes);

  for (uint32_t t = 0; t < frames; ++t) {
    for (uint16_t c = 0; c < channels; ++c) {
      const double x = wave.samples(t, c);
      if (enc == WavEncoding::pcm16) {
        double clipped = std::min(1.0, std::max(-1.0, x));
        auto q = static_cast<int32_t>(std::lrint(clipped * 32768.0));
        q = std::min<int32_t>(32767, std::max<int32_t>(-32768, q));
        detail::put_u16(out, static_cast<uint16_t>(static_cast<int16_t>(q)));
      } else {
        float f = static_cast<float>(x);
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        detail::put_u32(out, bits);
      }
    }
  }

  std::ofstream fs(path, std::ios::binary);
  if (!fs) throw IoError("cannot open for writing: " + path);
  fs.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!fs) throw IoError("short write: " + path);
}

/// Reads a RIFF WAV file. Accepts PCM 16-bit (format 1) and IEEE float
/// 32-bit (format 3), any channel count.
inline Waveform read_wav(const std::string& path) {
  std::ifstream fs(path, std::ios::binary);
  if (!fs) throw IoError("cannot open for reading: " + path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(fs)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < 44 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw IoError("not a RIFF/WAVE file: " + path);

  uint16_t format_tag = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  const unsigned char* data = nullptr;
  uint32_t data_bytes = 0;

  size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const char* id = reinterpret_cast<const char*>(buf.data() + pos);
    const uint32_t size = detail::get_u32(buf.data() + pos + 4);
    const size_t body = pos + 8;
    if (body + size > buf.size()) throw IoError("truncated chunk in " + path);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (size < 16) throw IoError("malformed fmt chunk in " + path);
      format_tag = detail::get_u16(buf.data() + body);
      channels = detail::get_u16(buf.data() + body + 2);
      sample_rate = detail::get_u32(buf.data() + body + 4);
      bits = detail::get_u16(buf.data() + body + 14);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = buf.data() + body;
      data_bytes = size;
    }
    pos = body + size + (size & 1);  // chunks are word-aligned
  }

  if (!data || channels == 0 || sample_rate == 0)
    throw IoError("missing fmt/data chunk in " + path);
  const bool pcm16 = format_tag == 1 && bits == 16;
  const bool f32 = format_tag == 3 && bits == 32;
  if (!pcm16 && !f32)
    throw IoError("unsupported WAV encoding (format " + std::to_string(format_tag) +
                  ", " + std::to_string(bits) + " bit) in " + path);

  const uint16_t bytes_per_sample = pcm16 ? 2 : 4;
  const uint32_t frames = data_bytes / (channels * bytes_per_sample);

  Waveform wave;
  wave.sample_rate = static_cast<int>(sample_rate);
  wave.samples.resize(frames, channels);
  const unsigned char* p = data;
  for (uint32_t t = 0; t < frames; ++t) {
    for (uint16_t c = 0; c < channels; ++c) {
      if (pcm16) {
        auto v = static_cast<int16_t>(detail::get_u16(p));
        wave.samples(t, c) = static_cast<double>(v) / 32768.0;
        p += 2;
      } else {
        uint32_t b = detail::get_u32(p);
        float f;
        std::memcpy(&f, &b, 4);
        wave.samples(t, c) = static_cast<double>(f);
        p += 4;
      }
    }
  }
  return wave;
}

}  // namespace idlma
