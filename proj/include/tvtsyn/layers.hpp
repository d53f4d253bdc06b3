#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tvtsyn/numerics.hpp"
#include "tvtsyn/weights.hpp"

namespace tvtsyn {

using num::ConvSpec;
using num::ConvState;
using num::ConvWeights;
using num::Dense;
using num::LayerNormParams;

inline std::uint32_t u32(std::size_t v) { return static_cast<std::uint32_t>(v); }

inline void bind_dense(Binder& b, const std::string& name, Dense& d) {
  d.set_weight(b.bind({name + ".weight", {u32(d.out), u32(d.in)}, Init::fan_in(d.in)}));
  if (d.has_bias()) {
    auto bias = b.bind({name + ".bias", {u32(d.out)}, Init::zeros()});
    d.bias.assign(bias.begin(), bias.end());
  }
}

inline void bind_conv(Binder& b, const std::string& name, ConvWeights& c) {
  const auto& s = c.spec;
  const std::size_t fan = (s.transposed ? s.out_ch : s.in_ch) * s.kernel;
  const std::vector<std::uint32_t> shape = s.transposed ? std::vector{u32(s.in_ch), u32(s.out_ch), u32(s.kernel)}
                                                        : std::vector{u32(s.out_ch), u32(s.in_ch), u32(s.kernel)};
  c.load_container(b.bind({name + ".weight", shape, Init::fan_in(fan)}));
  if (!c.bias.empty()) {
    auto bias = b.bind({name + ".bias", {u32(s.out_ch)}, Init::zeros()});
    c.bias.assign(bias.begin(), bias.end());
  }
}

inline void bind_norm(Binder& b, const std::string& name, LayerNormParams& n) {
  auto g = b.bind({name + ".gamma", {u32(n.dim())}, Init::ones()});
  auto bt = b.bind({name + ".beta", {u32(n.dim())}, Init::zeros()});
  n.gamma.assign(g.begin(), g.end());
  n.beta.assign(bt.begin(), bt.end());
}

inline void bind_vector(Binder& b, const std::string& name, std::vector<float>& v, Init init) {
  auto data = b.bind({name, {u32(v.size())}, init});
  v.assign(data.begin(), data.end());
}

inline ConvWeights make_conv(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride = 1,
                             std::size_t dilation = 1, bool transposed = false) {
  return ConvWeights(ConvSpec{in, out, kernel, stride, dilation, transposed});
}

// Applies a causal or transposed convolution according to its spec.
inline Tensor2 run_conv(const Tensor2& x, const ConvWeights& w, ConvState& st) {
  return w.spec.transposed ? num::transposed_conv1d_causal(x, w, st) : num::causal_conv1d(x, w, st);
}

inline Tensor2 elu(Tensor2 x) {
  num::apply_inplace(x, num::elu);
  return x;
}

// x + conv_k1(ELU(conv_k3_dilated(x)))
struct ResidualBlock {
  ConvWeights dilated;
  ConvWeights pointwise;

  ResidualBlock() = default;
  ResidualBlock(std::size_t channels, std::size_t kernel, std::size_t dilation)
      : dilated(make_conv(channels, channels, kernel, 1, dilation)), pointwise(make_conv(channels, channels, 1)) {}

  void bind(Binder& b, const std::string& name) {
    bind_conv(b, name + ".conv1", dilated);
    bind_conv(b, name + ".conv2", pointwise);
  }

  struct State {
    ConvState dilated;
    ConvState pointwise;
  };

  State new_state() const { return {num::initial_state(dilated.spec), num::initial_state(pointwise.spec)}; }

  Tensor2 operator()(const Tensor2& x, State& st) const {
    Tensor2 h = elu(num::causal_conv1d(x, dilated, st.dilated));
    Tensor2 y = num::causal_conv1d(h, pointwise, st.pointwise);
    num::add_inplace(y, x);
    return y;
  }
};

// ---------------------------------------------------------------------------
// Multi-head self-attention stack with RoPE and a rolling KV cache.

struct AttnPolicy {
  std::optional<num::AttnMask> mask;
  std::size_t block_frames = 0;  // > 0: keys limited to the query's block
};

// Fixed-capacity ring of past keys/values for one layer, positions implicit.
struct KvRing {
  Tensor2 keys;
  Tensor2 values;
  std::size_t head = 0;   // slot of the oldest entry
  std::size_t count = 0;  // valid entries

  KvRing() = default;
  KvRing(std::size_t capacity, std::size_t dim) : keys(capacity, dim), values(capacity, dim) {}

  std::size_t capacity() const { return keys.rows; }

  void push(std::span<const float> k, std::span<const float> v) {
    if (capacity() == 0) return;
    const std::size_t slot = (head + count) % capacity();
    std::copy(k.begin(), k.end(), keys.ptr(slot));
    std::copy(v.begin(), v.end(), values.ptr(slot));
    if (count < capacity()) ++count;
    else head = (head + 1) % capacity();
  }

  // Copies the cached rows oldest-first into the first `count` rows of dst.
  void copy_chronological(Tensor2& dst_keys, Tensor2& dst_values) const {
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t slot = (head + i) % capacity();
      std::copy(keys.ptr(slot), keys.ptr(slot) + keys.cols, dst_keys.ptr(i));
      std::copy(values.ptr(slot), values.ptr(slot) + values.cols, dst_values.ptr(i));
    }
  }
};

struct TransformerState {
  std::vector<KvRing> layers;
  std::int64_t position = 0;  // absolute frame index of the next input row

  std::size_t bytes() const {
    std::size_t n = sizeof(position);
    for (const auto& l : layers) n += (l.keys.size() + l.values.size()) * sizeof(float);
    return n;
  }
};

struct TransformerLayer {
  LayerNormParams ln_attn;
  Dense q, k, v, o;
  std::vector<float> scale_attn;
  LayerNormParams ln_ffn;
  Dense ff_in, ff_out;
  std::vector<float> scale_ffn;
};

class Transformer {
 public:
  Transformer() = default;
  Transformer(std::size_t d_model, std::size_t n_layers, std::size_t n_heads, std::size_t ffn_dim,
              std::size_t lookback_frames, float layer_scale)
      : d_model_(d_model), n_heads_(n_heads), lookback_(lookback_frames), layer_scale_(layer_scale),
        out_norm_(d_model) {
    layers_.resize(n_layers);
    for (auto& l : layers_) {
      l.ln_attn = LayerNormParams(d_model);
      l.q = Dense(d_model, d_model, false);
      l.k = Dense(d_model, d_model, false);
      l.v = Dense(d_model, d_model, false);
      l.o = Dense(d_model, d_model, false);
      l.scale_attn.assign(d_model, layer_scale);
      l.ln_ffn = LayerNormParams(d_model);
      l.ff_in = Dense(d_model, ffn_dim);
      l.ff_out = Dense(ffn_dim, d_model);
      l.scale_ffn.assign(d_model, layer_scale);
    }
  }

  void bind(Binder& b, const std::string& name) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      auto& l = layers_[i];
      const std::string p = name + ".layer" + std::to_string(i);
      bind_norm(b, p + ".ln_attn", l.ln_attn);
      bind_dense(b, p + ".attn.q", l.q);
      bind_dense(b, p + ".attn.k", l.k);
      bind_dense(b, p + ".attn.v", l.v);
      bind_dense(b, p + ".attn.o", l.o);
      bind_vector(b, p + ".scale_attn", l.scale_attn, Init::constant(layer_scale_));
      bind_norm(b, p + ".ln_ffn", l.ln_ffn);
      bind_dense(b, p + ".ffn.in", l.ff_in);
      bind_dense(b, p + ".ffn.out", l.ff_out);
      bind_vector(b, p + ".scale_ffn", l.scale_ffn, Init::constant(layer_scale_));
    }
    bind_norm(b, name + ".ln_out", out_norm_);
  }

  std::size_t d_model() const { return d_model_; }
  std::size_t lookback() const { return lookback_; }
  std::size_t head_dim() const { return d_model_ / n_heads_; }

  TransformerState new_state() const {
    TransformerState st;
    st.layers.assign(layers_.size(), KvRing(lookback_, d_model_));
    return st;
  }

  // Processes rows x (T x d_model). With a state, rows sit at positions
  // state.position ... and attend to the cached past plus each other; without
  // one they are a whole sequence starting at position 0. Either way the
  // visible keys are fixed by the policy's mask and block size.
  Tensor2 forward(const Tensor2& input, TransformerState* state, const AttnPolicy& policy) const {
    if (input.cols != d_model_) throw ConfigError("Transformer: input width mismatch");
    if (policy.mask) policy.mask->validate();
    const std::int64_t pos0 = state != nullptr ? state->position : 0;
    if (state != nullptr && state->layers.size() != layers_.size()) throw InternalError("Transformer: state has wrong layer count");
    const std::size_t T = input.rows;
    const std::size_t hd = head_dim();
    Tensor2 x = input;

    for (std::size_t li = 0; li < layers_.size(); ++li) {
      const auto& l = layers_[li];
      const Tensor2 h = l.ln_attn(x);
      Tensor2 q = l.q(h);
      Tensor2 k = l.k(h);
      Tensor2 v = l.v(h);
      num::rope_apply_inplace(q, pos0, hd);
      num::rope_apply_inplace(k, pos0, hd);

      std::size_t past = 0;
      Tensor2 keys, values;
      if (state != nullptr) {
        const KvRing& ring = state->layers[li];
        past = ring.count;
        if (static_cast<std::int64_t>(past) > pos0) throw InternalError("Transformer: KV cache ahead of stream position");
        keys = Tensor2(past + T, d_model_);
        values = Tensor2(past + T, d_model_);
        ring.copy_chronological(keys, values);
        std::copy(k.data.begin(), k.data.end(), keys.ptr(past));
        std::copy(v.data.begin(), v.data.end(), values.ptr(past));
      }
      const Tensor2& K = state != nullptr ? keys : k;
      const Tensor2& V = state != nullptr ? values : v;

      num::AttnWindow window;
      window.mask = policy.mask;
      // Lookahead in the first layer only.
      if (li > 0 && window.mask) window.mask->lookahead_frames = 0;
      window.block_frames = policy.block_frames;
      window.query_start = pos0;
      window.key_start = pos0 - static_cast<std::int64_t>(past);

      Tensor2 att(T, d_model_);
      for (std::size_t head = 0; head < n_heads_; ++head) {
        const std::size_t off = head * hd;
        num::sdpa_rows(q.ptr() + off, d_model_, T, K.ptr() + off, d_model_, V.ptr() + off, d_model_, K.rows, hd, hd,
                       window, att.ptr() + off, d_model_);
      }
      add_scaled(x, l.o(att), l.scale_attn);

      Tensor2 f = l.ff_in(l.ln_ffn(x));
      num::apply_inplace(f, num::gelu);
      add_scaled(x, l.ff_out(f), l.scale_ffn);

      if (state != nullptr) {
        KvRing& ring = state->layers[li];
        for (std::size_t t = 0; t < T; ++t) ring.push(k.row(t), v.row(t));
      }
    }
    out_norm_.apply_inplace(x);
    if (state != nullptr) state->position += static_cast<std::int64_t>(T);
    return x;
  }

 private:
  static void add_scaled(Tensor2& x, const Tensor2& y, const std::vector<float>& scale) {
    for (std::size_t r = 0; r < x.rows; ++r) {
      float* xr = x.ptr(r);
      const float* yr = y.ptr(r);
      for (std::size_t c = 0; c < x.cols; ++c) xr[c] += scale[c] * yr[c];
    }
  }

  std::size_t d_model_ = 0;
  std::size_t n_heads_ = 1;
  std::size_t lookback_ = 0;
  float layer_scale_ = 0.01f;
  std::vector<TransformerLayer> layers_;
  LayerNormParams out_norm_;
};

}  // namespace tvtsyn
