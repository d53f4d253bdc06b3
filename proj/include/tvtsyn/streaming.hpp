#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "tvtsyn/model.hpp"

namespace tvtsyn {

inline constexpr float kFrameMs = 1000.0f * kHopSamples / kSampleRate;  // 20 ms

struct StreamConfig {
  float chunk_ms = 60.0f;
  float overlap_ms = 20.0f;
  std::size_t lookahead_frames = 4;  // encoder, within the chunk
  float f0_scale = 1.0f;

  static std::size_t ms_to_samples(float ms, const char* what) {
    const double samples = static_cast<double>(ms) * kSampleRate / 1000.0;
    if (!(samples >= 0.0) || std::abs(samples - std::round(samples)) > 1e-6) {
      std::ostringstream os;
      os << what << " " << ms << " ms is not a whole number of samples at 16 kHz";
      throw ConfigError(os.str());
    }
    return static_cast<std::size_t>(std::llround(samples));
  }

  void validate() const {
    if (!(chunk_ms > 0.0f)) throw ConfigError("chunk_ms must be positive");
    const double frames = static_cast<double>(chunk_ms) / kFrameMs;
    if (std::abs(frames - std::round(frames)) > 1e-6) {
      const double lo = std::max(1.0, std::floor(frames)) * kFrameMs;
      const double hi = std::ceil(frames) * kFrameMs;
      std::ostringstream os;
      os << "chunk_ms " << chunk_ms << " (" << chunk_ms * kSampleRate / 1000.0f
         << " samples) is not a multiple of the 320-sample frame; nearest valid sizes: ";
      if (lo < hi) os << lo << " ms or " << hi << " ms";
      else os << hi << " ms";
      throw ConfigError(os.str());
    }
    if (overlap_ms < 0.0f) throw ConfigError("overlap_ms must be non-negative");
    if (overlap_ms > chunk_ms) throw ConfigError("overlap_ms must not exceed chunk_ms");
    ms_to_samples(overlap_ms, "overlap_ms");
    if (lookahead_frames > num::kMaxLookaheadFrames) throw ConfigError("encoder lookahead exceeds 4 frames");
    if (!(f0_scale >= 0.0f)) throw ConfigError("f0_scale must be non-negative");
  }

  std::size_t chunk_samples() const { return ms_to_samples(chunk_ms, "chunk_ms"); }
  std::size_t chunk_frames() const { return chunk_samples() / kHopSamples; }
  std::size_t overlap_samples() const { return ms_to_samples(overlap_ms, "overlap_ms"); }

  // Offline options that reproduce this stream.
  SynthOptions synth_options() const {
    SynthOptions o;
    o.lookahead_frames = lookahead_frames;
    o.block_frames = chunk_frames();
    o.overlap_samples = overlap_samples();
    o.f0_scale = f0_scale;
    return o;
  }
};

// One real-time conversion stream. All mutable state lives here; the model
// is shared read-only and must outlive the session.
class StreamSession {
 public:
  static StreamSession open(const Model& model, const StreamConfig& cfg, std::span<const float> speaker) {
    cfg.validate();
    if (cfg.lookahead_frames > model.config().encoder.lookahead_frames) {
      throw ConfigError("stream lookahead exceeds the model's configured lookahead");
    }
    return StreamSession(model, cfg, model.prepare_speaker(speaker));
  }

  const StreamConfig& config() const { return cfg_; }
  const SpeakerContext& speaker() const { return speaker_; }
  bool closed() const { return closed_; }
  std::int64_t samples_in() const { return samples_in_; }
  std::int64_t samples_out() const { return samples_out_; }
  std::int64_t frames() const { return enc_.context.position; }

  // Converts one chunk; the output has the same length as the input.
  std::vector<float> feed_chunk(std::span<const float> samples) {
    if (closed_) throw StateError("feed_chunk after flush");
    if (samples.size() != chunk_samples_) {
      throw InputError("chunk has " + std::to_string(samples.size()) + " samples, expected " +
                       std::to_string(chunk_samples_));
    }
    const Model& m = *model_;
    if (dec_.context.position != enc_.context.position) throw InternalError("stream clocks out of sync");

    const Tensor2 frames = m.encoder().encode_frames(
        Tensor2::column(samples), enc_, m.encoder_policy(cfg_.lookahead_frames, chunk_frames_, true), true);
    const auto q = m.vq().quantize(frames);
    const TvtSequence tvt = m.tvt().sequence(q.output, speaker_);
    const auto ctx = m.decoder().decode_context(q.output, tvt.s, dec_, cfg_.f0_scale, m.decoder_policy(true), true);
    Tensor2 y = m.decoder().synthesize_wave(ctx.latents, dec_.cnn);
    if (y.rows != samples.size()) throw InternalError("decoder produced " + std::to_string(y.rows) + " samples");

    if (!tail_.empty()) crossfade_inplace(y.data, tail_);
    if (overlap_samples_ > 0) {
      auto probe = dec_.cnn;
      const Tensor2 z = m.decoder().synthesize_wave(Tensor2(tail_frames(overlap_samples_), ctx.latents.cols), probe);
      tail_.assign(z.data.begin(), z.data.begin() + static_cast<std::ptrdiff_t>(overlap_samples_));
    }
    samples_in_ += static_cast<std::int64_t>(samples.size());
    samples_out_ += static_cast<std::int64_t>(y.rows);
    return std::move(y.data);
  }

  // Emits the fading overlap tail and closes the session.
  std::vector<float> flush() {
    if (closed_) throw StateError("session already flushed");
    closed_ = true;
    std::vector<float> out(tail_.size());
    const auto len = static_cast<float>(tail_.size());
    for (std::size_t n = 0; n < tail_.size(); ++n) out[n] = (1.0f - static_cast<float>(n) / len) * tail_[n];
    tail_.clear();
    samples_out_ += static_cast<std::int64_t>(out.size());
    return out;
  }

  // Back to the freshly opened state; weights and speaker memory are kept.
  void reset() {
    enc_ = model_->encoder().new_state();
    dec_ = model_->decoder().new_state();
    tail_.clear();
    closed_ = false;
    samples_in_ = 0;
    samples_out_ = 0;
  }

  // Bytes of per-stream state (independent of how long the stream has run).
  std::size_t state_bytes() const {
    return enc_.bytes() + dec_.bytes() + overlap_samples_ * sizeof(float) + 2 * sizeof(std::int64_t);
  }

 private:
  StreamSession(const Model& model, const StreamConfig& cfg, SpeakerContext speaker)
      : model_(&model), cfg_(cfg), speaker_(std::move(speaker)), chunk_samples_(cfg.chunk_samples()),
        chunk_frames_(cfg.chunk_frames()), overlap_samples_(cfg.overlap_samples()) {
    reset();
  }

  const Model* model_;
  StreamConfig cfg_;
  SpeakerContext speaker_;
  std::size_t chunk_samples_;
  std::size_t chunk_frames_;
  std::size_t overlap_samples_;
  ContentEncoder::State enc_;
  Decoder::State dec_;
  std::vector<float> tail_;
  bool closed_ = false;
  std::int64_t samples_in_ = 0;
  std::int64_t samples_out_ = 0;
};

}  // namespace tvtsyn
