#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tvtsyn/tensor.hpp"

namespace tvtsyn::num {

inline constexpr std::size_t kMaxLookaheadFrames = 4;

// Sliding attention window in frames: a query at t sees keys in
// [t - lookback_frames, t + lookahead_frames].
struct AttnMask {
  std::size_t lookback_frames = 100;
  std::size_t lookahead_frames = 0;

  void validate() const {
    if (lookahead_frames > kMaxLookaheadFrames) {
      throw ConfigError("AttnMask: lookahead " + std::to_string(lookahead_frames) + " exceeds " +
                        std::to_string(kMaxLookaheadFrames) + " frames");
    }
  }
};

// Positions of the query and key rows plus the mask. `block_frames` > 0
// additionally hides keys beyond the end of the block that contains the
// query, which is how within-chunk lookahead is expressed on a whole
// sequence. An absent mask makes every key visible.
struct AttnWindow {
  std::optional<AttnMask> mask = AttnMask{};
  std::int64_t query_start = 0;
  std::int64_t key_start = 0;
  std::size_t block_frames = 0;

  // Visible keys for the query at absolute position q, as a half-open range
  // of key row indices clipped to [0, key_rows).
  std::pair<std::size_t, std::size_t> key_range(std::int64_t q, std::size_t key_rows) const {
    std::int64_t lo = key_start;
    std::int64_t hi = key_start + static_cast<std::int64_t>(key_rows);  // exclusive
    if (mask) {
      lo = std::max(lo, q - static_cast<std::int64_t>(mask->lookback_frames));
      hi = std::min(hi, q + static_cast<std::int64_t>(mask->lookahead_frames) + 1);
      if (block_frames > 0) {
        const auto b = static_cast<std::int64_t>(block_frames);
        hi = std::min(hi, (q / b + 1) * b);
      }
    }
    if (hi <= lo) return {0, 0};
    return {static_cast<std::size_t>(lo - key_start), static_cast<std::size_t>(hi - key_start)};
  }
};

// Single-head scaled dot-product attention on raw strided rows. Softmax uses
// max subtraction; keys are summed in ascending position order.
inline void sdpa_rows(const float* q, std::size_t q_stride, std::size_t n_queries, const float* k, std::size_t k_stride,
                      const float* v, std::size_t v_stride, std::size_t n_keys, std::size_t dim, std::size_t value_dim,
                      const AttnWindow& window, float* out, std::size_t out_stride, float* probs_out = nullptr) {
  const float scale = 1.0f / std::sqrt(static_cast<float>(dim));
  std::vector<float> scores(n_keys);
  for (std::size_t t = 0; t < n_queries; ++t) {
    const auto [lo, hi] = window.key_range(window.query_start + static_cast<std::int64_t>(t), n_keys);
    if (hi <= lo) throw ConfigError("sdpa: attention row " + std::to_string(t) + " is fully masked");
    const float* qt = q + t * q_stride;
    float mx = -INFINITY;
    for (std::size_t j = lo; j < hi; ++j) {
      const float* kj = k + j * k_stride;
      float s = 0.0f;
      for (std::size_t c = 0; c < dim; ++c) s += qt[c] * kj[c];
      s *= scale;
      scores[j] = s;
      mx = std::max(mx, s);
    }
    float sum = 0.0f;
    for (std::size_t j = lo; j < hi; ++j) {
      scores[j] = std::exp(scores[j] - mx);
      sum += scores[j];
    }
    const float inv = 1.0f / sum;
    float* ot = out + t * out_stride;
    std::fill(ot, ot + value_dim, 0.0f);
    for (std::size_t j = lo; j < hi; ++j) {
      const float p = scores[j] * inv;
      const float* vj = v + j * v_stride;
      for (std::size_t c = 0; c < value_dim; ++c) ot[c] += p * vj[c];
    }
    if (probs_out != nullptr) {
      float* pt = probs_out + t * n_keys;
      std::fill(pt, pt + n_keys, 0.0f);
      for (std::size_t j = lo; j < hi; ++j) pt[j] = scores[j] * inv;
    }
  }
}

// queries T x d, keys S x d, values S x dv. Query row t and key row j are
// both taken to sit at position t / j; without a mask every key is visible.
inline Tensor2 sdpa(const Tensor2& queries, const Tensor2& keys, const Tensor2& values,
                    const std::optional<AttnMask>& mask, Tensor2* probs = nullptr) {
  if (queries.cols != keys.cols) throw ConfigError("sdpa: query/key dimension mismatch");
  if (keys.rows != values.rows) throw ConfigError("sdpa: key/value count mismatch");
  if (mask) mask->validate();
  AttnWindow w;
  w.mask = mask;
  Tensor2 out(queries.rows, values.cols);
  if (probs != nullptr) *probs = Tensor2(queries.rows, keys.rows);
  sdpa_rows(queries.ptr(), queries.cols, queries.rows, keys.ptr(), keys.cols, values.ptr(), values.cols, keys.rows,
            keys.cols, values.cols, w, out.ptr(), out.cols, probs != nullptr ? probs->ptr() : nullptr);
  return out;
}

}  // namespace tvtsyn::num
