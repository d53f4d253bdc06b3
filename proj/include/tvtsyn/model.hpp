#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "tvtsyn/config.hpp"
#include "tvtsyn/content_encoder.hpp"
#include "tvtsyn/decoder.hpp"
#include "tvtsyn/tvt.hpp"
#include "tvtsyn/weights.hpp"

namespace tvtsyn {

struct SynthOptions {
  std::optional<std::size_t> lookahead_frames;  // encoder attention; model default when unset
  std::size_t block_frames = 0;      // > 0: lookahead and crossfades follow this block size
  bool masked = true;                // false removes every attention mask
  std::size_t overlap_samples = 0;   // crossfade length at block boundaries
  float f0_scale = 1.0f;
  std::optional<float> alpha_override;
};

struct SynthResult {
  std::vector<float> wave;  // 320 x frames samples
  Tensor2 content;          // quantized content frames
  std::vector<std::uint32_t> codes;
  TvtSequence timbre;
  ProsodyTrack prosody;
};

// Linear crossfade of the first tail.size() samples of y from tail into y.
inline void crossfade_inplace(std::span<float> y, std::span<const float> tail) {
  const std::size_t o = std::min(tail.size(), y.size());
  const auto len = static_cast<float>(tail.size());
  for (std::size_t n = 0; n < o; ++n) {
    const float w = static_cast<float>(n) / len;
    y[n] = (1.0f - w) * tail[n] + w * y[n];
  }
}

inline std::size_t tail_frames(std::size_t overlap_samples) {
  return (overlap_samples + kHopSamples - 1) / kHopSamples;
}

class Model {
 public:
  explicit Model(const ModelConfig& cfg)
      : cfg_((cfg.validate(), cfg)), encoder_(cfg.encoder), vq_(cfg.vq, cfg.encoder.d_model),
        tvt_(cfg.tvt, cfg.encoder.d_model), decoder_(cfg.decoder, cfg.prosody, cfg.tvt.cond_dim) {}

  void bind(Binder& b) {
    encoder_.bind(b, "enc");
    vq_.bind(b, "vq");
    tvt_.bind(b, "tvt");
    decoder_.bind(b, "dec");
  }

  static Model from_store(const WeightStore& store) {
    Model m(config_from_store(store));
    LoadBinder binder(store);
    m.bind(binder);
    binder.require_all_used();
    return m;
  }

  // Seeded initialization; the store also records the configuration.
  static WeightStore random_init(std::uint64_t seed, const ModelConfig& cfg) {
    WeightStore store;
    store_config(store, cfg);
    Model m(cfg);
    InitBinder binder(store, seed);
    m.bind(binder);
    return store;
  }

  static std::size_t encoder_parameters(const WeightStore& s) { return s.parameter_count({"enc.", "vq."}); }
  static std::size_t decoder_parameters(const WeightStore& s) { return s.parameter_count({"tvt.", "dec."}); }

  const ModelConfig& config() const { return cfg_; }
  const ContentEncoder& encoder() const { return encoder_; }
  const VectorQuantizer& vq() const { return vq_; }
  const TvtModule& tvt() const { return tvt_; }
  TvtModule& tvt() { return tvt_; }
  const Decoder& decoder() const { return decoder_; }
  Decoder& decoder() { return decoder_; }

  SpeakerContext prepare_speaker(std::span<const float> g) const { return tvt_.prepare(g); }

  AttnPolicy encoder_policy(std::size_t lookahead, std::size_t block_frames, bool masked) const {
    AttnPolicy p;
    if (masked) p.mask = num::AttnMask{cfg_.encoder.lookback_frames, lookahead};
    p.block_frames = block_frames;
    return p;
  }

  AttnPolicy decoder_policy(bool masked) const {
    AttnPolicy p;
    if (masked) p.mask = num::AttnMask{cfg_.decoder.lookback_frames, cfg_.decoder.lookahead_frames};
    return p;
  }

  // Crossfade source at a block boundary: the CNN output for the latents
  // before `boundary` followed by zero frames, computed on a window that
  // covers the CNN's receptive field.
  std::vector<float> boundary_tail(const Tensor2& latents, std::size_t boundary, std::size_t overlap) const {
    const std::int64_t earliest = decoder_.earliest_frame_for_sample(static_cast<std::int64_t>(boundary * kHopSamples));
    const auto start = static_cast<std::size_t>(std::max<std::int64_t>(0, earliest));
    Tensor2 window = latents.slice_rows(start, boundary);
    window.append_rows(Tensor2(tail_frames(overlap), latents.cols));
    auto st = decoder_.new_cnn_state();
    const Tensor2 y = decoder_.synthesize_wave(window, st);
    const std::size_t off = (boundary - start) * kHopSamples;
    return {y.data.begin() + static_cast<std::ptrdiff_t>(off),
            y.data.begin() + static_cast<std::ptrdiff_t>(off + overlap)};
  }

  // Whole-utterance conversion. With block_frames set this reproduces a
  // chunked stream with that many frames per chunk.
  SynthResult synthesize(std::span<const float> wave, const SpeakerContext& spk, const SynthOptions& opt = {}) const {
    const std::size_t lookahead = opt.lookahead_frames.value_or(cfg_.encoder.lookahead_frames);
    SynthResult r;
    auto enc_state = encoder_.new_state();
    const Tensor2 frames = encoder_.encode_frames(Tensor2::column(wave), enc_state,
                                                  encoder_policy(lookahead, opt.block_frames, opt.masked),
                                                  false);
    auto q = vq_.quantize(frames);
    r.codes = std::move(q.indices);
    r.content = std::move(q.output);
    r.timbre = tvt_.sequence(r.content, spk, opt.alpha_override);

    auto dec_state = decoder_.new_state();
    auto ctx = decoder_.decode_context(r.content, r.timbre.s, dec_state, opt.f0_scale, decoder_policy(opt.masked), false);
    r.prosody = std::move(ctx.prosody);
    const Tensor2 y = decoder_.synthesize_wave(ctx.latents, dec_state.cnn);
    r.wave = y.data;

    if (opt.block_frames > 0 && opt.overlap_samples > 0) {
      for (std::size_t b = opt.block_frames; b < ctx.latents.rows; b += opt.block_frames) {
        const std::vector<float> tail = boundary_tail(ctx.latents, b, opt.overlap_samples);
        crossfade_inplace(std::span<float>(r.wave).subspan(b * kHopSamples), tail);
      }
    }
    return r;
  }

 private:
  ModelConfig cfg_;
  ContentEncoder encoder_;
  VectorQuantizer vq_;
  TvtModule tvt_;
  Decoder decoder_;
};

}  // namespace tvtsyn
