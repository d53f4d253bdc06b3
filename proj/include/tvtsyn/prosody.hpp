#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tvtsyn/config.hpp"
#include "tvtsyn/layers.hpp"

namespace tvtsyn {

inline constexpr float kEnergyFloor = 1e-8f;
inline constexpr std::size_t kF0Window = 1024;
inline constexpr std::size_t kF0MinLag = 32;   // 500 Hz
inline constexpr std::size_t kF0MaxLag = 320;  // 50 Hz
inline constexpr float kF0MinHz = 50.0f;
inline constexpr float kF0MaxHz = 500.0f;
inline constexpr double kVoicingThreshold = 0.3;
inline constexpr double kPeakFraction = 0.9;

// log(RMS + 1e-8) for every complete 320-sample frame.
inline std::vector<float> extract_energy(std::span<const float> wave) {
  const std::size_t frames = wave.size() / kHopSamples;
  std::vector<float> out(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    double s = 0.0;
    for (std::size_t i = 0; i < kHopSamples; ++i) {
      const double v = wave[t * kHopSamples + i];
      s += v * v;
    }
    out[t] = static_cast<float>(std::log(std::sqrt(s / kHopSamples) + kEnergyFloor));
  }
  return out;
}

// Autocorrelation pitch per 320-sample frame: a 1024-sample window centred
// on the frame (zero outside the signal), normalized autocorrelation over
// lags 32..320, first peak within 90 % of the best, parabolic refinement.
// Frames whose best correlation is below 0.3 are unvoiced (0).
inline std::vector<float> extract_f0(std::span<const float> wave) {
  const std::size_t frames = wave.size() / kHopSamples;
  std::vector<float> out(frames, 0.0f);
  std::vector<double> win(kF0Window);
  std::vector<double> r(kF0MaxLag + 2, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    const auto centre = static_cast<std::ptrdiff_t>(t * kHopSamples + kHopSamples / 2);
    const std::ptrdiff_t start = centre - static_cast<std::ptrdiff_t>(kF0Window / 2);
    double energy = 0.0;
    for (std::size_t i = 0; i < kF0Window; ++i) {
      const std::ptrdiff_t j = start + static_cast<std::ptrdiff_t>(i);
      win[i] = (j >= 0 && j < static_cast<std::ptrdiff_t>(wave.size())) ? wave[static_cast<std::size_t>(j)] : 0.0;
      energy += win[i] * win[i];
    }
    if (energy <= 0.0) continue;

    for (std::size_t lag = kF0MinLag - 1; lag <= kF0MaxLag + 1; ++lag) {
      double num = 0.0, e0 = 0.0, e1 = 0.0;
      for (std::size_t i = 0; i + lag < kF0Window; ++i) {
        num += win[i] * win[i + lag];
        e0 += win[i] * win[i];
        e1 += win[i + lag] * win[i + lag];
      }
      r[lag] = (e0 > 0.0 && e1 > 0.0) ? num / std::sqrt(e0 * e1) : 0.0;
    }

    double best = -1.0;
    for (std::size_t lag = kF0MinLag; lag <= kF0MaxLag; ++lag) best = std::max(best, r[lag]);
    if (best < kVoicingThreshold) continue;

    std::size_t pick = 0;
    for (std::size_t lag = kF0MinLag; lag <= kF0MaxLag; ++lag) {
      const bool peak = r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1];
      if (peak && r[lag] >= kPeakFraction * best) {
        pick = lag;
        break;
      }
    }
    if (pick == 0) continue;

    double lag = static_cast<double>(pick);
    const double denom = r[pick - 1] - 2.0 * r[pick] + r[pick + 1];
    if (denom < 0.0) lag += 0.5 * (r[pick - 1] - r[pick + 1]) / denom;
    const double f0 = static_cast<double>(kSampleRate) / lag;
    if (f0 >= kF0MinHz && f0 <= kF0MaxHz) out[t] = static_cast<float>(f0);
  }
  return out;
}

// conv(k3) -> ReLU -> conv(k3) -> ReLU -> conv(k1), all causal.
class ProsodyPredictor {
 public:
  struct State {
    ConvState conv1, conv2, proj;
    std::size_t bytes() const { return conv1.bytes() + conv2.bytes() + proj.bytes(); }
  };

  ProsodyPredictor() = default;
  ProsodyPredictor(std::size_t in, const ProsodyConfig& cfg)
      : conv1_(make_conv(in, cfg.hidden, cfg.kernel)), conv2_(make_conv(cfg.hidden, cfg.hidden, cfg.kernel)),
        proj_(make_conv(cfg.hidden, 1, 1)) {}

  void bind(Binder& b, const std::string& name) {
    bind_conv(b, name + ".conv1", conv1_);
    bind_conv(b, name + ".conv2", conv2_);
    bind_conv(b, name + ".proj", proj_);
  }

  ConvWeights& output_layer() { return proj_; }

  State new_state() const {
    return {num::initial_state(conv1_.spec), num::initial_state(conv2_.spec), num::initial_state(proj_.spec)};
  }

  Tensor2 operator()(const Tensor2& x, State& st) const {
    Tensor2 h = num::causal_conv1d(x, conv1_, st.conv1);
    num::apply_inplace(h, num::relu);
    h = num::causal_conv1d(h, conv2_, st.conv2);
    num::apply_inplace(h, num::relu);
    return num::causal_conv1d(h, proj_, st.proj);
  }

 private:
  ConvWeights conv1_, conv2_, proj_;
};

struct ProsodyTrack {
  std::vector<float> f0;      // Hz, >= 0
  std::vector<float> energy;  // log energy
};

// F0 and energy predictors plus the embedding that feeds both back into the
// decoder stream.
class ProsodyModule {
 public:
  struct State {
    ProsodyPredictor::State f0, energy;
    std::size_t bytes() const { return f0.bytes() + energy.bytes(); }
  };

  ProsodyModule() = default;
  ProsodyModule(std::size_t d_model, const ProsodyConfig& cfg)
      : f0_(d_model, cfg), energy_(d_model, cfg), embed_(2, d_model) {}

  void bind(Binder& b, const std::string& name) {
    f0_.bind(b, name + ".f0");
    energy_.bind(b, name + ".energy");
    bind_dense(b, name + ".embed", embed_);
  }

  ProsodyPredictor& f0_predictor() { return f0_; }
  ProsodyPredictor& energy_predictor() { return energy_; }

  State new_state() const { return {f0_.new_state(), energy_.new_state()}; }

  ProsodyTrack predict(const Tensor2& features, State& st) const {
    const Tensor2 f = f0_(features, st.f0);
    const Tensor2 e = energy_(features, st.energy);
    ProsodyTrack tr;
    tr.f0.resize(f.rows);
    tr.energy.assign(e.data.begin(), e.data.end());
    for (std::size_t t = 0; t < f.rows; ++t) tr.f0[t] = std::max(0.0f, f(t, 0));
    return tr;
  }

  // Rows of Dense([log1p(f0 * f0_scale), energy]).
  Tensor2 embed(const ProsodyTrack& tr, float f0_scale) const {
    Tensor2 in(tr.f0.size(), 2);
    for (std::size_t t = 0; t < tr.f0.size(); ++t) {
      in(t, 0) = std::log1p(tr.f0[t] * f0_scale);
      in(t, 1) = tr.energy[t];
    }
    return embed_(in);
  }

 private:
  ProsodyPredictor f0_, energy_;
  Dense embed_;
};

}  // namespace tvtsyn
