#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "tvtsyn/error.hpp"

namespace tvtsyn {

// Dense row-major f32 matrix. Sequences are stored time-major: one row per
// time step (sample or frame), one column per channel.
struct Tensor2 {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  Tensor2() = default;
  Tensor2(std::size_t r, std::size_t c, float fill = 0.0f) : rows(r), cols(c), data(r * c, fill) {}

  static Tensor2 from(std::size_t r, std::size_t c, std::vector<float> values) {
    if (values.size() != r * c) {
      throw ConfigError("Tensor2: " + std::to_string(values.size()) + " values for a " + std::to_string(r) + "x" +
                        std::to_string(c) + " matrix");
    }
    Tensor2 t;
    t.rows = r;
    t.cols = c;
    t.data = std::move(values);
    return t;
  }

  // Single-column sequence (e.g. a waveform as T x 1).
  static Tensor2 column(std::span<const float> values) {
    return from(values.size(), 1, std::vector<float>(values.begin(), values.end()));
  }

  bool empty() const { return rows == 0; }
  std::size_t size() const { return data.size(); }

  float& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<float> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const float> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  float* ptr(std::size_t r = 0) { return data.data() + r * cols; }
  const float* ptr(std::size_t r = 0) const { return data.data() + r * cols; }

  Tensor2 slice_rows(std::size_t begin, std::size_t end) const {
    Tensor2 out(end - begin, cols);
    std::copy(data.begin() + static_cast<std::ptrdiff_t>(begin * cols),
              data.begin() + static_cast<std::ptrdiff_t>(end * cols), out.data.begin());
    return out;
  }

  void append_rows(const Tensor2& other) {
    if (rows == 0 && cols == 0) cols = other.cols;
    if (other.cols != cols) throw ConfigError("Tensor2::append_rows: column mismatch");
    data.insert(data.end(), other.data.begin(), other.data.end());
    rows += other.rows;
  }

  bool all_finite() const {
    return std::all_of(data.begin(), data.end(), [](float v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor2&, const Tensor2&) = default;
};

inline float max_abs_diff(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw InputError("max_abs_diff: length mismatch");
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline float max_abs_diff(const Tensor2& a, const Tensor2& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw InputError("max_abs_diff: shape mismatch");
  return max_abs_diff(std::span<const float>(a.data), std::span<const float>(b.data));
}

}  // namespace tvtsyn
