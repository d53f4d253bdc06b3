#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "tvtsyn/config.hpp"
#include "tvtsyn/error.hpp"

namespace tvtsyn {

namespace detail {

inline std::uint32_t le32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(p[i]);
  return v;
}

inline std::uint16_t le16(const char* p) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(p[0]) | (static_cast<unsigned char>(p[1]) << 8));
}

inline void put32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put16(std::vector<char>& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

}  // namespace detail

// RIFF/WAVE, PCM 16-bit, mono, 16 kHz. Samples are s / 32768.
inline std::vector<float> decode_wav(std::span<const char> bytes) {
  using detail::le16;
  using detail::le32;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError("wav: not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* h = bytes.data() + pos;
    const std::uint32_t size = le32(h + 4);
    const std::size_t body = pos + 8;
    if (size > bytes.size() - body) throw FormatError("wav: chunk '" + std::string(h, 4) + "' is truncated");
    if (std::memcmp(h, "fmt ", 4) == 0) {
      if (size < 16) throw FormatError("wav: fmt chunk too short");
      const char* f = bytes.data() + body;
      const std::uint16_t format = le16(f);
      const std::uint16_t channels = le16(f + 2);
      const std::uint32_t rate = le32(f + 4);
      const std::uint16_t bits = le16(f + 14);
      if (format != 1) throw InputError("wav: only PCM is supported (format tag " + std::to_string(format) + ")");
      if (channels != 1) throw InputError("wav: expected mono, got " + std::to_string(channels) + " channels");
      if (rate != kSampleRate) throw InputError("wav: expected 16000 Hz, got " + std::to_string(rate) + " Hz");
      if (bits != 16) throw InputError("wav: expected 16-bit samples, got " + std::to_string(bits));
      have_fmt = true;
    } else if (std::memcmp(h, "data", 4) == 0) {
      if (!have_fmt) throw FormatError("wav: data chunk before fmt chunk");
      std::vector<float> out(size / 2);
      const char* d = bytes.data() + body;
      for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<float>(static_cast<std::int16_t>(le16(d + 2 * i))) / 32768.0f;
      }
      return out;
    }
    pos = body + size + (size & 1);
  }
  throw FormatError("wav: no data chunk");
}

inline std::int16_t to_pcm16(float x) {
  const double v = std::round(static_cast<double>(x) * 32768.0);
  return static_cast<std::int16_t>(std::clamp(v, -32768.0, 32767.0));
}

inline std::vector<char> encode_wav(std::span<const float> samples) {
  std::vector<char> out;
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  detail::put32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  detail::put32(out, 16);
  detail::put16(out, 1);
  detail::put16(out, 1);
  detail::put32(out, kSampleRate);
  detail::put32(out, kSampleRate * 2);
  detail::put16(out, 2);
  detail::put16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  detail::put32(out, data_bytes);
  for (float s : samples) detail::put16(out, static_cast<std::uint16_t>(to_pcm16(s)));
  return out;
}

inline std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::span<const char> bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write '" + path.string() + "'");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw InputError("failed writing '" + path.string() + "'");
}

inline std::vector<float> read_wav(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return decode_wav(bytes);
}

inline void write_wav(const std::filesystem::path& path, std::span<const float> samples) {
  write_file(path, encode_wav(samples));
}

// Raw little-endian f32 vector (speaker embeddings).
inline std::vector<float> read_f32_file(const std::filesystem::path& path, std::size_t expected) {
  const auto bytes = read_file(path);
  if (bytes.size() != expected * 4) {
    throw InputError("'" + path.string() + "' has " + std::to_string(bytes.size()) + " bytes, expected " +
                     std::to_string(expected * 4) + " (" + std::to_string(expected) + " f32 values)");
  }
  std::vector<float> out(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    const std::uint32_t bits = detail::le32(bytes.data() + 4 * i);
    std::memcpy(&out[i], &bits, 4);
  }
  for (float v : out)
    if (!std::isfinite(v)) throw InputError("'" + path.string() + "' contains non-finite values");
  return out;
}

inline void write_f32_file(const std::filesystem::path& path, std::span<const float> values) {
  std::vector<char> bytes;
  bytes.reserve(values.size() * 4);
  for (float v : values) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, &v, 4);
    detail::put32(bytes, bits);
  }
  write_file(path, bytes);
}

}  // namespace tvtsyn
