#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tvtsyn/config.hpp"
#include "tvtsyn/layers.hpp"
#include "tvtsyn/prosody.hpp"

namespace tvtsyn {

// y = Proj([(1 + gamma(s)) * LN(x) + beta(s) || sigmoid(gate(s)) * LN(s)])
class ClnFusion {
 public:
  ClnFusion() = default;
  ClnFusion(std::size_t d_model, std::size_t cond_dim)
      : norm_x_(d_model), norm_s_(cond_dim), gamma_(cond_dim, d_model), beta_(cond_dim, d_model), gate_(cond_dim, 1),
        proj_(d_model + cond_dim, d_model) {}

  void bind(Binder& b, const std::string& name) {
    bind_norm(b, name + ".norm_x", norm_x_);
    bind_norm(b, name + ".norm_s", norm_s_);
    bind_dense(b, name + ".gamma", gamma_);
    bind_dense(b, name + ".beta", beta_);
    bind_dense(b, name + ".gate", gate_);
    bind_dense(b, name + ".proj", proj_);
  }

  Dense& gamma_generator() { return gamma_; }
  Dense& beta_generator() { return beta_; }
  Dense& gate_generator() { return gate_; }
  Dense& projection() { return proj_; }

  Tensor2 operator()(const Tensor2& x, const Tensor2& s) const {
    if (x.rows != s.rows) throw InputError("cln_fuse: content and timbre lengths differ");
    const std::size_t d = x.cols;
    const std::size_t c = s.cols;
    const Tensor2 nx = norm_x_(x);
    const Tensor2 ns = norm_s_(s);
    const Tensor2 gm = gamma_(s);
    const Tensor2 bt = beta_(s);
    const Tensor2 gt = gate_(s);
    Tensor2 cat(x.rows, d + c);
    for (std::size_t t = 0; t < x.rows; ++t) {
      float* row = cat.ptr(t);
      for (std::size_t i = 0; i < d; ++i) row[i] = (1.0f + gm(t, i)) * nx(t, i) + bt(t, i);
      const float g = num::sigmoid(gt(t, 0));
      for (std::size_t i = 0; i < c; ++i) row[d + i] = g * ns(t, i);
    }
    return proj_(cat);
  }

 private:
  LayerNormParams norm_x_, norm_s_;
  Dense gamma_, beta_, gate_, proj_;
};

// Conditioning, prosody injection, causal context transformer, and the
// upsampling CNN that turns 50 Hz latents into 16 kHz samples.
class Decoder {
 public:
  struct CnnState {
    ConvState conv0;
    std::vector<ConvState> up;
    std::vector<ResidualBlock::State> res;
    ConvState final;

    std::size_t bytes() const {
      std::size_t n = conv0.bytes() + final.bytes();
      for (const auto& u : up) n += u.bytes();
      for (const auto& r : res) n += r.dilated.bytes() + r.pointwise.bytes();
      return n;
    }
  };

  struct State {
    ProsodyModule::State prosody;
    TransformerState context;
    CnnState cnn;

    std::size_t bytes() const { return prosody.bytes() + context.bytes() + cnn.bytes(); }
  };

  struct ContextResult {
    Tensor2 latents;  // T x d_model, input of the CNN
    ProsodyTrack prosody;
  };

  Decoder() = default;
  Decoder(const DecoderConfig& cfg, const ProsodyConfig& pcfg, std::size_t cond_dim) : cfg_(cfg) {
    cln_in_ = ClnFusion(cfg.d_model, cond_dim);
    prosody_ = ProsodyModule(cfg.d_model, pcfg);
    context_ = Transformer(cfg.d_model, cfg.n_layers, cfg.n_heads, cfg.ffn_dim, cfg.lookback_frames, cfg.layer_scale);
    cln_out_ = ClnFusion(cfg.d_model, cond_dim);
    std::size_t ch = cfg.base_channels << cfg.strides.size();
    conv0_ = make_conv(cfg.d_model, ch, cfg.init_kernel);
    for (std::size_t s : cfg.strides) {
      up_.push_back(make_conv(ch, ch / 2, 2 * s, s, 1, true));
      ch /= 2;
      res_.emplace_back(ch, cfg.res_kernel, cfg.dilation);
    }
    final_ = make_conv(ch, 1, cfg.final_kernel);
  }

  void bind(Binder& b, const std::string& name) {
    cln_in_.bind(b, name + ".cln_in");
    prosody_.bind(b, name + ".prosody");
    context_.bind(b, name + ".context");
    cln_out_.bind(b, name + ".cln_out");
    bind_conv(b, name + ".cnn.conv0", conv0_);
    for (std::size_t i = 0; i < up_.size(); ++i) {
      const std::string p = name + ".cnn.stage" + std::to_string(i);
      bind_conv(b, p + ".up", up_[i]);
      res_[i].bind(b, p + ".res");
    }
    bind_conv(b, name + ".cnn.final", final_);
  }

  const DecoderConfig& config() const { return cfg_; }
  ClnFusion& cln_in() { return cln_in_; }
  const ClnFusion& cln_in() const { return cln_in_; }
  ProsodyModule& prosody() { return prosody_; }
  const Transformer& context() const { return context_; }

  CnnState new_cnn_state() const {
    CnnState st;
    st.conv0 = num::initial_state(conv0_.spec);
    for (const auto& u : up_) st.up.push_back(num::initial_state(u.spec));
    for (const auto& r : res_) st.res.push_back(r.new_state());
    st.final = num::initial_state(final_.spec);
    return st;
  }

  State new_state() const { return {prosody_.new_state(), context_.new_state(), new_cnn_state()}; }

  // content and timbre are T x d_model and T x cond_dim. `use_cache`
  // continues a stream through state.context; otherwise the frames are a
  // whole sequence. Prosody state is always carried.
  ContextResult decode_context(const Tensor2& content, const Tensor2& timbre, State& st, float f0_scale,
                               const AttnPolicy& policy, bool use_cache) const {
    if (content.rows != timbre.rows) throw InputError("decode_context: content and timbre lengths differ");
    ContextResult r;
    Tensor2 h = cln_in_(content, timbre);
    r.prosody = prosody_.predict(h, st.prosody);
    num::add_inplace(h, prosody_.embed(r.prosody, f0_scale));
    h = context_.forward(h, use_cache ? &st.context : nullptr, policy);
    r.latents = cln_out_(h, timbre);
    return r;
  }

  // T latent frames -> 320 T samples in [-1, 1] (column).
  Tensor2 synthesize_wave(const Tensor2& latents, CnnState& st) const {
    Tensor2 x = num::causal_conv1d(latents, conv0_, st.conv0);
    for (std::size_t i = 0; i < up_.size(); ++i) {
      x = num::transposed_conv1d_causal(elu(std::move(x)), up_[i], st.up[i]);
      x = res_[i](x, st.res[i]);
    }
    x = num::causal_conv1d(elu(std::move(x)), final_, st.final);
    for (float& v : x.data) v = std::clamp(std::tanh(v), -1.0f, 1.0f);
    return x;
  }

  // Earliest latent frame that can influence output sample `sample`, found
  // by walking the CNN backwards. Starting the CNN from a fresh state at
  // this frame or earlier reproduces that sample exactly.
  std::int64_t earliest_frame_for_sample(std::int64_t sample) const {
    auto floor_div = [](std::int64_t a, std::int64_t b) { return a >= 0 ? a / b : -((-a + b - 1) / b); };
    auto causal = [](std::int64_t e, const ConvSpec& s) {
      return e - static_cast<std::int64_t>(s.history());
    };
    std::int64_t e = causal(sample, final_.spec);
    for (std::size_t i = up_.size(); i-- > 0;) {
      e = causal(e, res_[i].dilated.spec);
      const auto& s = up_[i].spec;
      const auto k = static_cast<std::int64_t>(s.kernel);
      const auto st = static_cast<std::int64_t>(s.stride);
      e = -floor_div(-(e - k + 1), st);  // ceil((e - k + 1) / stride)
    }
    return causal(e, conv0_.spec);
  }

 private:
  DecoderConfig cfg_;
  ClnFusion cln_in_;
  ProsodyModule prosody_;
  Transformer context_;
  ClnFusion cln_out_;
  ConvWeights conv0_;
  std::vector<ConvWeights> up_;
  std::vector<ResidualBlock> res_;
  ConvWeights final_;
};

}  // namespace tvtsyn
