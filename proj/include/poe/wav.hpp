#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "poe/features.hpp"

namespace poe {

enum class WavFormat { pcm16, float32 };

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

inline void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

}  // namespace detail

/// Decode an interleaved 6-channel RIFF/WAVE byte buffer.
inline AudioClip decode_wav(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw ParseError("not a RIFF/WAVE file");
  }
  int format = 0, channels = 0, bits = 0;
  double rate = 0.0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = detail::read_u32(&bytes[pos + 4]);
    const unsigned char* body = &bytes[pos + 8];
    if (pos + 8 + size > bytes.size()) throw ParseError("truncated WAV chunk");
    if (std::memcmp(&bytes[pos], "fmt ", 4) == 0) {
      if (size < 16) throw ParseError("short fmt chunk");
      format = detail::read_u16(body);
      channels = detail::read_u16(body + 2);
      rate = detail::read_u32(body + 4);
      bits = detail::read_u16(body + 14);
    } else if (std::memcmp(&bytes[pos], "data", 4) == 0) {
      data = body;
      data_size = size;
    }
    pos += 8 + size + (size & 1u);
  }
  if (format == 0 || data == nullptr) throw ParseError("WAV needs fmt and data chunks");
  if (channels != kNumMicrophones) {
    throw DimensionError("WAV has " + std::to_string(channels) + " channels, expected " +
                         std::to_string(kNumMicrophones));
  }
  const bool pcm16 = format == 1 && bits == 16;
  const bool f32 = format == 3 && bits == 32;
  if (!pcm16 && !f32) throw ParseError("unsupported WAV encoding (need PCM 16-bit or float32)");
  const std::size_t width = pcm16 ? 2 : 4;
  const std::size_t frames = data_size / (width * kNumMicrophones);
  std::array<std::vector<double>, kNumMicrophones> ch;
  for (auto& c : ch) c.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    for (int c = 0; c < kNumMicrophones; ++c) {
      const unsigned char* p = data + (f * kNumMicrophones + static_cast<std::size_t>(c)) * width;
      if (pcm16) {
        ch[c][f] = static_cast<std::int16_t>(detail::read_u16(p)) / 32768.0;
      } else {
        const std::uint32_t u = detail::read_u32(p);
        float v;
        std::memcpy(&v, &u, 4);
        ch[c][f] = v;
      }
    }
  }
  return AudioClip(std::move(ch), rate);
}

inline std::vector<unsigned char> encode_wav(const AudioClip& clip, WavFormat format) {
  const bool pcm16 = format == WavFormat::pcm16;
  const std::uint16_t width = pcm16 ? 2 : 4;
  const auto frames = static_cast<std::uint32_t>(clip.samples());
  const std::uint32_t data_size = frames * width * kNumMicrophones;
  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  detail::put_u32(out, 36 + data_size);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  detail::put_u32(out, 16);
  detail::put_u16(out, pcm16 ? 1 : 3);
  detail::put_u16(out, kNumMicrophones);
  const auto rate = static_cast<std::uint32_t>(clip.sample_rate());
  detail::put_u32(out, rate);
  detail::put_u32(out, rate * width * kNumMicrophones);
  detail::put_u16(out, static_cast<std::uint16_t>(width * kNumMicrophones));
  detail::put_u16(out, static_cast<std::uint16_t>(8 * width));
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  detail::put_u32(out, data_size);
  for (std::uint32_t f = 0; f < frames; ++f) {
    for (int c = 0; c < kNumMicrophones; ++c) {
      const double x = clip.channel(c)[f];
      if (pcm16) {
        const double s = std::clamp(std::round(x * 32768.0), -32768.0, 32767.0);
        detail::put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(s)));
      } else {
        const auto v = static_cast<float>(x);
        std::uint32_t u;
        std::memcpy(&u, &v, 4);
        detail::put_u32(out, u);
      }
    }
  }
  return out;
}

inline AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_wav(bytes);
}

inline void write_wav(const AudioClip& clip, const std::filesystem::path& path, WavFormat format = WavFormat::float32) {
  const auto bytes = encode_wav(clip, format);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParameterError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace poe
