#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "tvtsyn/tensor.hpp"

namespace tvtsyn::num {

inline constexpr float kSampleRate = 16000.0f;
inline constexpr float kMelFloor = 1e-5f;
inline constexpr std::size_t kDefaultMelBands = 80;
inline constexpr float kMelWindowsMs[] = {2.0f, 4.0f, 8.0f, 16.0f, 32.0f, 64.0f, 128.0f};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// HTK-style triangular filterbank, n_mels x (n_fft/2 + 1), spanning 0 Hz to
// Nyquist. Bands narrower than one FFT bin come out as all-zero rows.
inline Tensor2 mel_filterbank(std::size_t n_fft, std::size_t n_mels, float sample_rate = kSampleRate) {
  const std::size_t bins = n_fft / 2 + 1;
  Tensor2 fb(n_mels, bins);
  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t m = 0; m < edges.size(); ++m) {
    edges[m] = mel_to_hz(mel_hi * static_cast<double>(m) / static_cast<double>(n_mels + 1));
  }
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (std::size_t b = 0; b < bins; ++b) {
      const double f = static_cast<double>(b) * sample_rate / static_cast<double>(n_fft);
      double w = 0.0;
      if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) w = (hi - f) / (hi - mid);
      fb(m, b) = static_cast<float>(w);
    }
  }
  return fb;
}

struct StftFrames {
  std::size_t window = 0;
  std::size_t hop = 0;
  std::size_t n_fft = 0;
};

inline StftFrames stft_geometry(float window_ms, float sample_rate = kSampleRate) {
  StftFrames g;
  g.window = static_cast<std::size_t>(std::lround(window_ms * sample_rate / 1000.0f));
  if (g.window < 4) throw ConfigError("stft: window too short");
  g.hop = g.window / 4;
  g.n_fft = next_pow2(g.window);
  return g;
}

// Magnitude STFT with a periodic Hann window, hop = window / 4, no centring.
// Returns frames x (n_fft/2 + 1); empty when the wave is shorter than one window.
inline Tensor2 stft_magnitude(std::span<const float> wave, const StftFrames& g) {
  if (wave.size() < g.window) return Tensor2(0, g.n_fft / 2 + 1);
  const std::size_t n_frames = 1 + (wave.size() - g.window) / g.hop;
  const std::size_t bins = g.n_fft / 2 + 1;
  Tensor2 out(n_frames, bins);
  std::vector<float> hann(g.window);
  for (std::size_t i = 0; i < g.window; ++i) {
    hann[i] = static_cast<float>(0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                                      static_cast<double>(g.window)));
  }
  Eigen::FFT<float> fft;
  std::vector<float> frame(g.n_fft, 0.0f);
  std::vector<std::complex<float>> spec;
  for (std::size_t f = 0; f < n_frames; ++f) {
    const std::size_t start = f * g.hop;
    for (std::size_t i = 0; i < g.window; ++i) frame[i] = wave[start + i] * hann[i];
    std::fill(frame.begin() + static_cast<std::ptrdiff_t>(g.window), frame.end(), 0.0f);
    fft.fwd(spec, frame);
    for (std::size_t b = 0; b < bins; ++b) out(f, b) = std::abs(spec[b]);
  }
  return out;
}

// log(max(mel magnitude, 1e-5)), frames x n_mels. The window must be one of
// 2, 4, ..., 128 ms. Empty when the wave is shorter than one window.
inline Tensor2 stft_log_mel(std::span<const float> wave, float window_ms, std::size_t n_mels = kDefaultMelBands) {
  if (std::find(std::begin(kMelWindowsMs), std::end(kMelWindowsMs), window_ms) == std::end(kMelWindowsMs)) {
    throw ConfigError("stft_log_mel: unsupported window " + std::to_string(window_ms) + " ms");
  }
  const StftFrames g = stft_geometry(window_ms);
  const Tensor2 mag = stft_magnitude(wave, g);
  const Tensor2 fb = mel_filterbank(g.n_fft, n_mels);
  Tensor2 out(mag.rows, n_mels);
  for (std::size_t f = 0; f < mag.rows; ++f) {
    for (std::size_t m = 0; m < n_mels; ++m) {
      float s = 0.0f;
      for (std::size_t b = 0; b < mag.cols; ++b) s += fb(m, b) * mag(f, b);
      out(f, m) = std::log(std::max(s, kMelFloor));
    }
  }
  return out;
}

}  // namespace tvtsyn::num
