#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "tvtsyn/tensor.hpp"

namespace tvtsyn::num {

inline constexpr float kLayerNormEps = 1e-5f;

// out = gamma * (x - mean) / sqrt(var + eps) + beta. `out` may alias `x`.
inline void layer_norm(std::span<const float> x, std::span<const float> gamma, std::span<const float> beta, float eps,
                       std::span<float> out) {
  const std::size_t n = x.size();
  if (gamma.size() != n || beta.size() != n || out.size() != n) throw ConfigError("layer_norm: dimension mismatch");
  if (!(eps > 0.0f)) throw ConfigError("layer_norm: eps must be positive");
  if (n == 0) return;
  float mean = 0.0f;
  for (float v : x) mean += v;
  mean /= static_cast<float>(n);
  float var = 0.0f;
  for (float v : x) var += (v - mean) * (v - mean);
  var /= static_cast<float>(n);
  const float inv = 1.0f / std::sqrt(var + eps);
  for (std::size_t i = 0; i < n; ++i) out[i] = gamma[i] * ((x[i] - mean) * inv) + beta[i];
}

inline std::vector<float> layer_norm(std::span<const float> x, std::span<const float> gamma,
                                     std::span<const float> beta, float eps = kLayerNormEps) {
  std::vector<float> out(x.size());
  layer_norm(x, gamma, beta, eps, out);
  return out;
}

// Affine layer norm applied independently to every row.
struct LayerNormParams {
  std::vector<float> gamma;
  std::vector<float> beta;

  LayerNormParams() = default;
  explicit LayerNormParams(std::size_t dim) : gamma(dim, 1.0f), beta(dim, 0.0f) {}

  std::size_t dim() const { return gamma.size(); }

  void apply_inplace(Tensor2& x) const {
    if (x.cols != dim()) throw ConfigError("LayerNorm: dimension mismatch");
    for (std::size_t r = 0; r < x.rows; ++r) layer_norm(x.row(r), gamma, beta, kLayerNormEps, x.row(r));
  }

  Tensor2 operator()(const Tensor2& x) const {
    Tensor2 y = x;
    apply_inplace(y);
    return y;
  }
};

}  // namespace tvtsyn::num
