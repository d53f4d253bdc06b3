#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>

#include "tvtsyn/tensor.hpp"

namespace tvtsyn::num {

inline constexpr double kRopeBase = 10000.0;

// Rotary position embedding on interleaved pairs (2i, 2i+1) of every
// head_dim-wide slice of each row. Row r sits at absolute position
// position_offset + r. Angles are computed in double.
inline void rope_apply_inplace(Tensor2& x, std::int64_t position_offset, std::size_t head_dim = 0) {
  if (head_dim == 0) head_dim = x.cols;
  if (head_dim % 2 != 0) throw ConfigError("rope_apply: head dimension must be even");
  if (x.cols % head_dim != 0) throw ConfigError("rope_apply: row width is not a multiple of the head dimension");
  const std::size_t half = head_dim / 2;
  for (std::size_t r = 0; r < x.rows; ++r) {
    const double pos = static_cast<double>(position_offset + static_cast<std::int64_t>(r));
    float* row = x.ptr(r);
    for (std::size_t i = 0; i < half; ++i) {
      const double freq = std::pow(kRopeBase, -2.0 * static_cast<double>(i) / static_cast<double>(head_dim));
      const double angle = pos * freq;
      const auto c = static_cast<float>(std::cos(angle));
      const auto s = static_cast<float>(std::sin(angle));
      for (std::size_t h = 0; h < x.cols; h += head_dim) {
        float& a = row[h + 2 * i];
        float& b = row[h + 2 * i + 1];
        const float a0 = a;
        const float b0 = b;
        a = a0 * c - b0 * s;
        b = a0 * s + b0 * c;
      }
    }
  }
}

inline Tensor2 rope_apply(const Tensor2& x, std::int64_t position_offset, std::size_t head_dim = 0) {
  Tensor2 y = x;
  rope_apply_inplace(y, position_offset, head_dim);
  return y;
}

}  // namespace tvtsyn::num
