#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "tvtsyn/config.hpp"
#include "tvtsyn/layers.hpp"

namespace tvtsyn {

// Factorized bottleneck: project down, snap to the nearest codebook entry,
// project back up.
class VectorQuantizer {
 public:
  VectorQuantizer() = default;
  VectorQuantizer(const VqConfig& cfg, std::size_t d_model)
      : cfg_(cfg), down_(d_model, cfg.latent_dim), up_(cfg.latent_dim, d_model),
        codebook_(cfg.codebook_size, cfg.latent_dim) {}

  void bind(Binder& b, const std::string& name) {
    bind_dense(b, name + ".down", down_);
    auto codes = b.bind({name + ".codebook", {u32(cfg_.codebook_size), u32(cfg_.latent_dim)},
                         cfg_.l2_normalize ? Init::unit_rows() : Init::normal(1.0f)});
    codebook_.data.assign(codes.begin(), codes.end());
    bind_dense(b, name + ".up", up_);
  }

  const Tensor2& codebook() const { return codebook_; }
  Tensor2& codebook() { return codebook_; }
  const Dense& down() const { return down_; }
  Dense& down() { return down_; }
  const Dense& up() const { return up_; }
  Dense& up() { return up_; }
  const VqConfig& config() const { return cfg_; }

  // Index of the code closest to z in L2 (z normalized first when the
  // config asks for it). Distances are accumulated in double; ties go to
  // the lowest index.
  std::uint32_t nearest(std::span<const float> z_in) const {
    if (z_in.size() != cfg_.latent_dim) throw ConfigError("vq: latent dimension mismatch");
    std::vector<float> z(z_in.begin(), z_in.end());
    if (cfg_.l2_normalize) num::normalize_inplace(z);
    std::uint32_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < codebook_.rows; ++j) {
      const float* c = codebook_.ptr(j);
      double d = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) {
        const double diff = static_cast<double>(z[i]) - static_cast<double>(c[i]);
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = static_cast<std::uint32_t>(j);
      }
    }
    return best;
  }

  struct Result {
    Tensor2 output;                      // T x d_model
    std::vector<std::uint32_t> indices;  // T
    double commitment_loss = 0.0;        // diagnostic only
  };

  Result quantize(const Tensor2& frames) const {
    Result r;
    const Tensor2 z = down_(frames);
    Tensor2 zq(z.rows, z.cols);
    r.indices.resize(z.rows);
    double sq = 0.0;
    for (std::size_t t = 0; t < z.rows; ++t) {
      const std::uint32_t idx = nearest(z.row(t));
      r.indices[t] = idx;
      std::copy(codebook_.ptr(idx), codebook_.ptr(idx) + z.cols, zq.ptr(t));
      for (std::size_t i = 0; i < z.cols; ++i) {
        const double diff = static_cast<double>(z(t, i)) - zq(t, i);
        sq += diff * diff;
      }
    }
    if (z.rows > 0) r.commitment_loss = cfg_.commitment * sq / static_cast<double>(z.rows);
    r.output = up_(zq);
    return r;
  }

 private:
  VqConfig cfg_;
  Dense down_;
  Dense up_;
  Tensor2 codebook_;
};

// Causal strided CNN (waveform -> 50 Hz frames) followed by the masked
// context transformer.
class ContentEncoder {
 public:
  struct State {
    ConvState conv0;
    std::vector<ResidualBlock::State> res;
    std::vector<ConvState> down;
    ConvState final;
    TransformerState context;

    std::size_t bytes() const {
      std::size_t n = conv0.bytes() + final.bytes() + context.bytes();
      for (const auto& r : res) n += r.dilated.bytes() + r.pointwise.bytes();
      for (const auto& d : down) n += d.bytes();
      return n;
    }
  };

  ContentEncoder() = default;
  explicit ContentEncoder(const EncoderConfig& cfg) : cfg_(cfg) {
    std::size_t ch = cfg.base_channels;
    conv0_ = make_conv(1, ch, cfg.init_kernel);
    for (std::size_t s : cfg.strides) {
      res_.emplace_back(ch, cfg.res_kernel, cfg.dilation);
      down_.push_back(make_conv(ch, 2 * ch, 2 * s, s));
      ch *= 2;
    }
    final_ = make_conv(ch, cfg.d_model, cfg.final_kernel);
    context_ = Transformer(cfg.d_model, cfg.n_layers, cfg.n_heads, cfg.ffn_dim, cfg.lookback_frames, cfg.layer_scale);
  }

  void bind(Binder& b, const std::string& name) {
    bind_conv(b, name + ".conv0", conv0_);
    for (std::size_t i = 0; i < res_.size(); ++i) {
      const std::string p = name + ".stage" + std::to_string(i);
      res_[i].bind(b, p + ".res");
      bind_conv(b, p + ".down", down_[i]);
    }
    bind_conv(b, name + ".final", final_);
    context_.bind(b, name + ".context");
  }

  const EncoderConfig& config() const { return cfg_; }
  const Transformer& context() const { return context_; }

  State new_state() const {
    State st;
    st.conv0 = num::initial_state(conv0_.spec);
    for (const auto& r : res_) st.res.push_back(r.new_state());
    for (const auto& d : down_) st.down.push_back(num::initial_state(d.spec));
    st.final = num::initial_state(final_.spec);
    st.context = context_.new_state();
    return st;
  }

  // Waveform column (N x 1) -> ceil(N / 320) frames x d_model. Frame t is
  // computed at sample 320 t and sees samples up to and including it.
  Tensor2 conv_frames(const Tensor2& wave, State& st) const {
    if (wave.cols != 1) throw ConfigError("encoder: waveform must be a single column");
    Tensor2 x = num::causal_conv1d(wave, conv0_, st.conv0);
    for (std::size_t i = 0; i < res_.size(); ++i) {
      x = res_[i](x, st.res[i]);
      x = num::causal_conv1d(elu(std::move(x)), down_[i], st.down[i]);
    }
    return num::causal_conv1d(elu(std::move(x)), final_, st.final);
  }

  // Context transformer over frames. With `cache` the frames continue a
  // stream; without it they are a complete sequence.
  Tensor2 context_attend(const Tensor2& frames, const AttnPolicy& policy, TransformerState* cache) const {
    return context_.forward(frames, cache, policy);
  }

  Tensor2 encode_frames(const Tensor2& wave, State& st, const AttnPolicy& policy, bool use_cache) const {
    return context_attend(conv_frames(wave, st), policy, use_cache ? &st.context : nullptr);
  }

 private:
  EncoderConfig cfg_;
  ConvWeights conv0_;
  std::vector<ResidualBlock> res_;
  std::vector<ConvWeights> down_;
  ConvWeights final_;
  Transformer context_;
};

}  // namespace tvtsyn
