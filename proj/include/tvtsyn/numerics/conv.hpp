#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tvtsyn/numerics/dense.hpp"
#include "tvtsyn/tensor.hpp"

namespace tvtsyn::num {

struct ConvSpec {
  std::size_t in_ch = 1;
  std::size_t out_ch = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t dilation = 1;
  bool transposed = false;

  void validate() const {
    if (in_ch == 0 || out_ch == 0) throw ConfigError("ConvSpec: channel counts must be positive");
    if (kernel < 1) throw ConfigError("ConvSpec: kernel must be >= 1");
    if (stride < 1) throw ConfigError("ConvSpec: stride must be >= 1");
    if (dilation < 1) throw ConfigError("ConvSpec: dilation must be >= 1");
    if (transposed && dilation != 1) throw ConfigError("ConvSpec: transposed convolution supports dilation 1 only");
  }

  // Past input columns a causal convolution keeps between calls.
  std::size_t history() const { return (kernel - 1) * dilation; }

  // Output rows a transposed convolution keeps as partial sums between calls.
  std::size_t overhang() const { return kernel > stride ? kernel - stride : 0; }
};

// Convolution weights. Container layout is out x in x kernel for regular and
// in x out x kernel for transposed convolutions; internally both are kept as
// kernel x in x out.
struct ConvWeights {
  ConvSpec spec;
  std::vector<float> taps;  // kernel x in x out
  std::vector<float> bias;  // out_ch (may be empty)

  ConvWeights() = default;
  explicit ConvWeights(const ConvSpec& s, bool with_bias = true)
      : spec(s), taps(s.kernel * s.in_ch * s.out_ch, 0.0f), bias(with_bias ? s.out_ch : 0, 0.0f) {
    spec.validate();
  }

  static ConvWeights from_container(const ConvSpec& s, std::span<const float> w, std::span<const float> b) {
    ConvWeights cw(s, !b.empty());
    cw.load_container(w);
    if (!b.empty()) {
      if (b.size() != s.out_ch) throw ConfigError("ConvWeights: bias has " + std::to_string(b.size()) + " entries");
      cw.bias.assign(b.begin(), b.end());
    }
    return cw;
  }

  void load_container(std::span<const float> w) {
    const auto& s = spec;
    if (w.size() != s.kernel * s.in_ch * s.out_ch) {
      throw ConfigError("ConvWeights: expected " + std::to_string(s.kernel * s.in_ch * s.out_ch) + " weights, got " +
                        std::to_string(w.size()));
    }
    for (std::size_t o = 0; o < s.out_ch; ++o)
      for (std::size_t i = 0; i < s.in_ch; ++i)
        for (std::size_t k = 0; k < s.kernel; ++k) {
          const std::size_t src = s.transposed ? (i * s.out_ch + o) * s.kernel + k : (o * s.in_ch + i) * s.kernel + k;
          tap(k, i, o) = w[src];
        }
  }

  float& tap(std::size_t k, std::size_t i, std::size_t o) { return taps[(k * spec.in_ch + i) * spec.out_ch + o]; }
  float tap(std::size_t k, std::size_t i, std::size_t o) const { return taps[(k * spec.in_ch + i) * spec.out_ch + o]; }
  const float* tap_matrix(std::size_t k) const { return taps.data() + k * spec.in_ch * spec.out_ch; }
};

// Per-layer streaming state. For a causal convolution `carry` holds the last
// history() input rows; for a transposed convolution it holds overhang()
// rows of partial output sums. `position` counts input rows consumed.
struct ConvState {
  Tensor2 carry;
  std::int64_t position = 0;

  std::size_t bytes() const { return carry.data.size() * sizeof(float) + sizeof(position); }
};

inline ConvState initial_state(const ConvSpec& spec) {
  ConvState st;
  st.carry = spec.transposed ? Tensor2(spec.overhang(), spec.out_ch) : Tensor2(spec.history(), spec.in_ch);
  return st;
}

// Causal (optionally strided and dilated) convolution. Outputs are produced
// at absolute input positions that are multiples of the stride; the output at
// position p reads inputs p - (kernel-1)*dilation ... p. A stream split into
// any chunking yields the same outputs as a one-shot call.
inline Tensor2 causal_conv1d(const Tensor2& input, const ConvWeights& w, ConvState& state) {
  const ConvSpec& s = w.spec;
  if (s.transposed) throw ConfigError("causal_conv1d: spec is transposed");
  if (input.cols != s.in_ch) {
    throw ConfigError("causal_conv1d: input has " + std::to_string(input.cols) + " channels, spec expects " +
                      std::to_string(s.in_ch));
  }
  if (w.taps.size() != s.kernel * s.in_ch * s.out_ch) throw ConfigError("causal_conv1d: weight shape mismatch");
  const std::size_t hist = s.history();
  if (state.carry.rows != hist || (hist > 0 && state.carry.cols != s.in_ch)) {
    throw ConfigError("causal_conv1d: state does not match spec");
  }

  Tensor2 buf(hist + input.rows, s.in_ch);
  std::copy(state.carry.data.begin(), state.carry.data.end(), buf.data.begin());
  std::copy(input.data.begin(), input.data.end(), buf.data.begin() + static_cast<std::ptrdiff_t>(hist * s.in_ch));

  const auto stride = static_cast<std::int64_t>(s.stride);
  const std::int64_t pos0 = state.position;
  const std::int64_t end = pos0 + static_cast<std::int64_t>(input.rows);
  const std::int64_t first = ((pos0 + stride - 1) / stride) * stride;
  const std::size_t n_out = first < end ? static_cast<std::size_t>((end - first + stride - 1) / stride) : 0;

  Tensor2 out(n_out, s.out_ch);
  if (n_out > 0) {
    for (std::size_t r = 0; r < n_out; ++r) {
      if (!w.bias.empty()) std::copy(w.bias.begin(), w.bias.end(), out.ptr(r));
    }
    const std::size_t base = hist + static_cast<std::size_t>(first - pos0);
    for (std::size_t k = 0; k < s.kernel; ++k) {
      const std::size_t row = base - (s.kernel - 1 - k) * s.dilation;
      gemm_acc(buf.ptr(row), n_out, s.stride * s.in_ch, w.tap_matrix(k), s.in_ch, s.out_ch, out.ptr(), s.out_ch);
    }
  }

  if (hist > 0) state.carry = buf.slice_rows(buf.rows - hist, buf.rows);
  state.position = end;
  return out;
}

// Causal transposed convolution: each input row i contributes to output rows
// i*stride ... i*stride + kernel - 1. Rows past the end of the current input
// are kept as partial sums in the state and completed by the next call, so
// T inputs always emit exactly T*stride rows and no output looks ahead.
inline Tensor2 transposed_conv1d_causal(const Tensor2& input, const ConvWeights& w, ConvState& state) {
  const ConvSpec& s = w.spec;
  if (!s.transposed) throw ConfigError("transposed_conv1d_causal: spec is not transposed");
  if (input.cols != s.in_ch) {
    throw ConfigError("transposed_conv1d_causal: input has " + std::to_string(input.cols) + " channels, spec expects " +
                      std::to_string(s.in_ch));
  }
  if (w.taps.size() != s.kernel * s.in_ch * s.out_ch) throw ConfigError("transposed_conv1d_causal: weight shape mismatch");
  const std::size_t pend = s.overhang();
  if (state.carry.rows != pend || (pend > 0 && state.carry.cols != s.out_ch)) {
    throw ConfigError("transposed_conv1d_causal: state does not match spec");
  }

  const std::size_t emitted = input.rows * s.stride;
  Tensor2 acc(emitted + pend, s.out_ch);
  std::copy(state.carry.data.begin(), state.carry.data.end(), acc.data.begin());

  // Taps in descending order: every output element then sums its
  // contributions in ascending input order, matching across chunkings.
  if (input.rows > 0) {
    for (std::size_t k = s.kernel; k-- > 0;) {
      gemm_acc(input.ptr(), input.rows, s.in_ch, w.tap_matrix(k), s.in_ch, s.out_ch, acc.ptr(k), s.stride * s.out_ch);
    }
  }

  Tensor2 out = acc.slice_rows(0, emitted);
  if (!w.bias.empty()) {
    for (std::size_t r = 0; r < out.rows; ++r) {
      float* o = out.ptr(r);
      for (std::size_t c = 0; c < s.out_ch; ++c) o[c] += w.bias[c];
    }
  }
  Tensor2 carry(pend, s.out_ch);
  for (std::size_t r = 0; r < pend; ++r) {
    const float* src = acc.ptr(emitted + r);
    std::copy(src, src + s.out_ch, carry.ptr(r));
  }
  state.carry = std::move(carry);
  state.position += static_cast<std::int64_t>(input.rows);
  return out;
}

}  // namespace tvtsyn::num
