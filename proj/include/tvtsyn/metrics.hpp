#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "tvtsyn/model.hpp"
#include "tvtsyn/numerics/mel.hpp"
#include "tvtsyn/prosody.hpp"
#include "tvtsyn/streaming.hpp"

namespace tvtsyn {

// ---------------------------------------------------------------------------
// Quality metrics

struct MelL1 {
  double total = 0.0;
  std::vector<double> per_window;      // aligned with num::kMelWindowsMs
  std::vector<float> skipped_windows;  // windows longer than the signal
};

inline MelL1 multires_mel_l1_detail(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw InputError("multires_mel_l1: length mismatch");
  MelL1 r;
  for (float w : num::kMelWindowsMs) {
    const Tensor2 ma = num::stft_log_mel(a, w);
    const Tensor2 mb = num::stft_log_mel(b, w);
    double d = 0.0;
    if (ma.empty()) {
      r.skipped_windows.push_back(w);
    } else {
      for (std::size_t i = 0; i < ma.data.size(); ++i) d += std::abs(static_cast<double>(ma.data[i]) - mb.data[i]);
      d /= static_cast<double>(ma.data.size());
    }
    r.per_window.push_back(d);
    r.total += d;
  }
  return r;
}

inline float multires_mel_l1(std::span<const float> a, std::span<const float> b) {
  return static_cast<float>(multires_mel_l1_detail(a, b).total);
}

// Mean squared F0 error plus mean squared log-energy error.
inline float f0_energy_l2(const ProsodyTrack& a, const ProsodyTrack& b) {
  if (a.f0.size() != b.f0.size() || a.energy.size() != b.energy.size()) {
    throw InputError("f0_energy_l2: track lengths differ");
  }
  auto mse = [](const std::vector<float>& x, const std::vector<float>& y) {
    if (x.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (static_cast<double>(x[i]) - y[i]) * (static_cast<double>(x[i]) - y[i]);
    return s / static_cast<double>(x.size());
  };
  return static_cast<float>(mse(a.f0, b.f0) + mse(a.energy, b.energy));
}

inline float cosine_sim(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw InputError("cosine_sim: dimension mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw InputError("cosine_sim: zero vector");
  return static_cast<float>(std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0));
}

// ---------------------------------------------------------------------------
// Latency / real-time factor

// Milliseconds from an arbitrary origin.
using BenchClock = std::function<double()>;

inline BenchClock steady_clock_ms() {
  return [] {
    using namespace std::chrono;
    return duration<double, std::milli>(steady_clock::now().time_since_epoch()).count();
  };
}

// Feeds one chunk of a fresh session.
using ChunkSink = std::function<void(std::span<const float>)>;
using SessionFactory = std::function<ChunkSink()>;

struct BenchConfig {
  float chunk_ms = 60.0f;
  std::size_t warmup = 10;
  std::size_t measured = 100;
  std::size_t parallel_sessions = 1;  // > 1: sessions run concurrently
};

struct UtteranceStats {
  std::size_t chunks = 0;
  double processing_ms = 0.0;  // mean per chunk
  double latency_ms = 0.0;
  double rtf = 0.0;
};

struct LatencyReport {
  float chunk_ms = 0.0f;
  double latency_ms_mean = 0.0;
  double rtf_mean = 0.0;
  double processing_ms_mean = 0.0;
  std::size_t warmup_count = 0;
  std::size_t measured_count = 0;
  bool cyclic_reuse = false;
  std::size_t parallel_sessions = 1;
  bool real_time = false;  // rtf_mean < 1
  std::vector<UtteranceStats> utterances;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["chunk_ms"] = chunk_ms;
    j["latency_ms_mean"] = latency_ms_mean;
    j["rtf_mean"] = rtf_mean;
    j["processing_ms_mean"] = processing_ms_mean;
    j["warmup_count"] = warmup_count;
    j["measured_count"] = measured_count;
    j["cyclic_reuse"] = cyclic_reuse;
    j["mode"] = parallel_sessions > 1 ? "parallel-sessions" : "serial";
    j["parallel_sessions"] = parallel_sessions;
    j["rtf_below_one"] = real_time;
    j["utterances"] = nlohmann::json::array();
    for (const auto& u : utterances) {
      j["utterances"].push_back({{"latency_ms", u.latency_ms}, {"rtf", u.rtf}, {"processing_ms", u.processing_ms},
                                 {"chunks", u.chunks}});
    }
    return j;
  }
};

// Runs warmup + measured utterances (reusing the list cyclically when it
// is shorter) through fresh sessions and times each feed. Utterances are
// zero-padded to whole chunks. Per utterance: processing = mean chunk time,
// latency = chunk_ms + processing, rtf = mean of chunk time / chunk_ms.
inline LatencyReport latency_bench(const SessionFactory& factory, const std::vector<std::vector<float>>& utterances,
                                   const BenchConfig& cfg, const BenchClock& clock = steady_clock_ms()) {
  if (utterances.empty()) throw InputError("latency_bench: no utterances");
  if (cfg.measured == 0) throw ConfigError("latency_bench: measured count must be positive");
  const StreamConfig sc{cfg.chunk_ms, 0.0f};
  sc.validate();
  const std::size_t chunk = sc.chunk_samples();

  LatencyReport rep;
  rep.chunk_ms = cfg.chunk_ms;
  rep.warmup_count = cfg.warmup;
  rep.measured_count = cfg.measured;
  rep.parallel_sessions = std::max<std::size_t>(1, cfg.parallel_sessions);
  rep.cyclic_reuse = utterances.size() < cfg.warmup + cfg.measured;

  auto run_one = [&](std::size_t index, const BenchClock& clk) {
    const auto& utt = utterances[index % utterances.size()];
    ChunkSink feed = factory();
    UtteranceStats st;
    std::vector<float> buf(chunk);
    double sum_ms = 0.0, sum_rtf = 0.0;
    for (std::size_t off = 0; off < utt.size() || st.chunks == 0; off += chunk) {
      std::fill(buf.begin(), buf.end(), 0.0f);
      const std::size_t n = off < utt.size() ? std::min(chunk, utt.size() - off) : 0;
      std::copy(utt.begin() + static_cast<std::ptrdiff_t>(off), utt.begin() + static_cast<std::ptrdiff_t>(off + n),
                buf.begin());
      const double t0 = clk();
      feed(buf);
      const double dt = clk() - t0;
      sum_ms += dt;
      sum_rtf += dt / cfg.chunk_ms;
      ++st.chunks;
    }
    st.processing_ms = sum_ms / static_cast<double>(st.chunks);
    st.rtf = sum_rtf / static_cast<double>(st.chunks);
    st.latency_ms = cfg.chunk_ms + st.processing_ms;
    return st;
  };

  for (std::size_t i = 0; i < cfg.warmup; ++i) run_one(i, clock);

  rep.utterances.resize(cfg.measured);
  if (rep.parallel_sessions == 1) {
    for (std::size_t i = 0; i < cfg.measured; ++i) rep.utterances[i] = run_one(cfg.warmup + i, clock);
  } else {
    std::mutex clock_mutex;
    const BenchClock locked = [&] {
      std::lock_guard<std::mutex> lock(clock_mutex);
      return clock();
    };
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < rep.parallel_sessions; ++w) {
      workers.emplace_back([&, w] {
        for (std::size_t i = w; i < cfg.measured; i += rep.parallel_sessions) {
          rep.utterances[i] = run_one(cfg.warmup + i, locked);
        }
      });
    }
    for (auto& t : workers) t.join();
  }

  for (const auto& u : rep.utterances) {
    rep.latency_ms_mean += u.latency_ms;
    rep.rtf_mean += u.rtf;
    rep.processing_ms_mean += u.processing_ms;
  }
  const auto m = static_cast<double>(cfg.measured);
  rep.latency_ms_mean /= m;
  rep.rtf_mean /= m;
  rep.processing_ms_mean /= m;
  rep.real_time = rep.rtf_mean < 1.0;
  return rep;
}

// ---------------------------------------------------------------------------
// Causality probe

struct ProbeConfig {
  std::size_t lookahead_frames = 0;
  std::size_t trials = 100;
  std::uint64_t seed = 0;
  std::size_t frames = 24;           // utterance length per trial
  std::int64_t perturb_offset = -1;  // < 0: default horizon; otherwise frames past t
  bool masked = true;
};

struct ProbeViolation {
  std::size_t trial = 0;
  std::size_t cut_frame = 0;
  std::size_t first_changed_sample = 0;
};

struct ProbeReport {
  std::size_t trials = 0;
  std::size_t lookahead_frames = 0;
  std::size_t perturb_offset_frames = 0;
  std::vector<ProbeViolation> violations;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["trials"] = trials;
    j["lookahead_frames"] = lookahead_frames;
    j["perturb_offset_frames"] = perturb_offset_frames;
    j["violation_count"] = violations.size();
    j["violations"] = nlohmann::json::array();
    for (const auto& v : violations) {
      j["violations"].push_back(
          {{"trial", v.trial}, {"cut_frame", v.cut_frame}, {"first_changed_sample", v.first_changed_sample}});
    }
    return j;
  }
};

// For random inputs and cut frames t, replaces every sample after
// 320 (t + offset) with fresh noise, where offset defaults to the lookahead,
// and checks that output samples 0 .. 320 t are unchanged bit for bit.
inline ProbeReport causality_probe(const Model& model, const SpeakerContext& spk, const ProbeConfig& cfg) {
  const std::size_t offset =
      cfg.perturb_offset >= 0 ? static_cast<std::size_t>(cfg.perturb_offset) : cfg.lookahead_frames;
  if (cfg.frames < offset + 2) throw ConfigError("causality_probe: utterance too short for the horizon");
  ProbeReport rep;
  rep.trials = cfg.trials;
  rep.lookahead_frames = cfg.lookahead_frames;
  rep.perturb_offset_frames = offset;

  SynthOptions opt;
  opt.lookahead_frames = cfg.lookahead_frames;
  opt.masked = cfg.masked;

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<float> amp(-0.5f, 0.5f);
  const std::size_t n = cfg.frames * kHopSamples;
  for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
    std::vector<float> wave(n);
    for (float& v : wave) v = amp(rng);
    const std::size_t t = std::uniform_int_distribution<std::size_t>(0, cfg.frames - offset - 2)(rng);
    std::vector<float> perturbed = wave;
    for (std::size_t i = kHopSamples * (t + offset) + 1; i < n; ++i) perturbed[i] = amp(rng);

    const auto y0 = model.synthesize(wave, spk, opt).wave;
    const auto y1 = model.synthesize(perturbed, spk, opt).wave;
    for (std::size_t i = 0; i <= kHopSamples * t; ++i) {
      if (y0[i] != y1[i]) {
        rep.violations.push_back({trial, t, i});
        break;
      }
    }
  }
  return rep;
}

}  // namespace tvtsyn
