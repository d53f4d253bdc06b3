#pragma once

#include <cstdint>
#include <filesystem>
#include <list>
#include <random>
#include <string>
#include <vector>

#include "tvtsyn/tvtsyn.hpp"

namespace tvtsyn::fixtures {

inline std::vector<float> random_vector(std::size_t n, std::uint64_t seed, float scale = 1.0f) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.0f, scale);
  std::vector<float> v(n);
  for (float& x : v) x = d(rng);
  return v;
}

inline Tensor2 random_tensor(std::size_t rows, std::size_t cols, std::uint64_t seed, float scale = 1.0f) {
  return Tensor2::from(rows, cols, random_vector(rows * cols, seed, scale));
}

inline std::vector<float> random_wave(std::size_t n, std::uint64_t seed, float amp = 0.3f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-amp, amp);
  std::vector<float> v(n);
  for (float& x : v) x = d(rng);
  return v;
}

inline ConvWeights random_conv(const ConvSpec& spec, std::uint64_t seed, bool bias = true) {
  ConvWeights w(spec, bias);
  w.taps = random_vector(w.taps.size(), seed, 0.5f);
  if (bias) w.bias = random_vector(w.bias.size(), seed + 1, 0.1f);
  return w;
}

// Random-weight compact model shared across tests (immutable once built).
inline const Model& compact_model() {
  static const Model m = Model::from_store(Model::random_init(1234, ModelConfig::compact()));
  return m;
}

inline std::vector<float> speaker_vector(std::uint64_t seed) { return random_vector(704, seed); }

// Splits n into consecutive chunk lengths drawn from [1, max_len].
inline std::vector<std::size_t> random_splits(std::size_t n, std::size_t max_len, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> d(1, max_len);
  std::vector<std::size_t> out;
  for (std::size_t left = n; left > 0;) {
    const std::size_t k = std::min(left, d(rng));
    out.push_back(k);
    left -= k;
  }
  return out;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("tvtsyn_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Hands out zero-filled buffers and tallies parameter counts by name prefix.
class CountingBinder : public Binder {
 public:
  std::span<const float> bind(const ParamSlot& slot) override {
    std::size_t n = 1;
    for (auto d : slot.shape) n *= d;
    buffers_.emplace_back(n, 0.0f);
    counts_.emplace_back(slot.name, n);
    return buffers_.back();
  }

  std::size_t total(const std::vector<std::string>& prefixes) const {
    std::size_t t = 0;
    for (const auto& [name, n] : counts_)
      for (const auto& p : prefixes)
        if (name.rfind(p, 0) == 0) t += n;
    return t;
  }

 private:
  std::list<std::vector<float>> buffers_;
  std::vector<std::pair<std::string, std::size_t>> counts_;
};

}  // namespace tvtsyn::fixtures
