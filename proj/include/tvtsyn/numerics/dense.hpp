#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "tvtsyn/tensor.hpp"

#if defined(__GNUC__) || defined(__clang__)
#define TVTSYN_RESTRICT __restrict__
#else
#define TVTSYN_RESTRICT
#endif

namespace tvtsyn::num {

// y[r, :] += x[r, :] * wt for every row r, where wt is an in x out matrix.
// Each output element accumulates over the input index in ascending order,
// independently of how many rows are processed per call.
inline void gemm_acc(const float* x, std::size_t rows, std::size_t x_stride, const float* TVTSYN_RESTRICT wt,
                     std::size_t in, std::size_t out, float* y, std::size_t y_stride) {
  std::size_t r = 0;
  for (; r + 4 <= rows; r += 4) {
    const float* x0 = x + r * x_stride;
    const float* x1 = x0 + x_stride;
    const float* x2 = x1 + x_stride;
    const float* x3 = x2 + x_stride;
    float* TVTSYN_RESTRICT y0 = y + r * y_stride;
    float* TVTSYN_RESTRICT y1 = y0 + y_stride;
    float* TVTSYN_RESTRICT y2 = y1 + y_stride;
    float* TVTSYN_RESTRICT y3 = y2 + y_stride;
    for (std::size_t i = 0; i < in; ++i) {
      const float a0 = x0[i], a1 = x1[i], a2 = x2[i], a3 = x3[i];
      const float* TVTSYN_RESTRICT w = wt + i * out;
      for (std::size_t o = 0; o < out; ++o) {
        const float wo = w[o];
        y0[o] += a0 * wo;
        y1[o] += a1 * wo;
        y2[o] += a2 * wo;
        y3[o] += a3 * wo;
      }
    }
  }
  for (; r < rows; ++r) {
    const float* x0 = x + r * x_stride;
    float* TVTSYN_RESTRICT y0 = y + r * y_stride;
    for (std::size_t i = 0; i < in; ++i) {
      const float a0 = x0[i];
      const float* TVTSYN_RESTRICT w = wt + i * out;
      for (std::size_t o = 0; o < out; ++o) y0[o] += a0 * w[o];
    }
  }
}

// Fully connected layer. Stored transposed (in x out) for the kernel above;
// the container layout is the conventional out x in.
struct Dense {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<float> wt;    // in x out
  std::vector<float> bias;  // out, empty when the layer has no bias

  Dense() = default;
  Dense(std::size_t in_dim, std::size_t out_dim, bool with_bias = true)
      : in(in_dim), out(out_dim), wt(in_dim * out_dim, 0.0f), bias(with_bias ? out_dim : 0, 0.0f) {}

  bool has_bias() const { return !bias.empty(); }

  // Loads an out x in matrix.
  void set_weight(std::span<const float> w_out_in) {
    if (w_out_in.size() != in * out) throw ConfigError("Dense: weight size mismatch");
    for (std::size_t o = 0; o < out; ++o)
      for (std::size_t i = 0; i < in; ++i) wt[i * out + o] = w_out_in[o * in + i];
  }

  float weight(std::size_t o, std::size_t i) const { return wt[i * out + o]; }
  float& weight(std::size_t o, std::size_t i) { return wt[i * out + o]; }

  void apply_into(const float* x, std::size_t rows, std::size_t x_stride, float* y, std::size_t y_stride) const {
    for (std::size_t r = 0; r < rows; ++r) {
      float* yr = y + r * y_stride;
      if (has_bias()) {
        std::copy(bias.begin(), bias.end(), yr);
      } else {
        std::fill(yr, yr + out, 0.0f);
      }
    }
    gemm_acc(x, rows, x_stride, wt.data(), in, out, y, y_stride);
  }

  Tensor2 operator()(const Tensor2& x) const {
    if (x.cols != in) {
      throw ConfigError("Dense: input has " + std::to_string(x.cols) + " columns, layer expects " + std::to_string(in));
    }
    Tensor2 y(x.rows, out);
    apply_into(x.ptr(), x.rows, x.cols, y.ptr(), out);
    return y;
  }

  std::vector<float> operator()(std::span<const float> x) const {
    if (x.size() != in) throw ConfigError("Dense: input dimension mismatch");
    std::vector<float> y(out);
    apply_into(x.data(), 1, in, y.data(), out);
    return y;
  }
};

inline float elu(float x) { return x > 0.0f ? x : std::expm1(x); }
inline float gelu(float x) { return 0.5f * x * (1.0f + std::erf(x * 0.70710678118654752f)); }
inline float relu(float x) { return x > 0.0f ? x : 0.0f; }

inline float sigmoid(float x) {
  if (x >= 0.0f) {
    const float e = std::exp(-x);
    return 1.0f / (1.0f + e);
  }
  const float e = std::exp(x);
  return e / (1.0f + e);
}

template <typename F>
inline void apply_inplace(Tensor2& t, F&& f) {
  for (float& v : t.data) v = f(v);
}

template <typename F>
inline void apply_inplace(std::span<float> t, F&& f) {
  for (float& v : t) v = f(v);
}

inline void add_inplace(Tensor2& a, const Tensor2& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw ConfigError("add_inplace: shape mismatch");
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

inline float dot(std::span<const float> a, std::span<const float> b) {
  float s = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline float l2_norm(std::span<const float> a) {
  double s = 0.0;
  for (float v : a) s += static_cast<double>(v) * v;
  return static_cast<float>(std::sqrt(s));
}

// Scales to unit L2 norm; a zero vector is left unchanged.
inline void normalize_inplace(std::span<float> a) {
  const float n = l2_norm(a);
  if (n > 0.0f)
    for (float& v : a) v /= n;
}

}  // namespace tvtsyn::num
