#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "tvtsyn/error.hpp"
#include "tvtsyn/numerics/attention.hpp"

namespace tvtsyn {

inline constexpr std::size_t kSampleRate = 16000;
inline constexpr std::size_t kHopSamples = 320;  // 20 ms, 50 Hz frames

struct EncoderConfig {
  std::vector<std::size_t> strides{8, 5, 4, 2};
  std::size_t base_channels = 96;
  std::size_t init_kernel = 7;
  std::size_t res_kernel = 3;
  std::size_t final_kernel = 3;
  std::size_t dilation = 2;
  std::size_t d_model = 512;
  std::size_t n_layers = 8;
  std::size_t n_heads = 8;
  std::size_t ffn_dim = 2048;
  std::size_t lookback_frames = 100;
  std::size_t lookahead_frames = 4;
  float layer_scale = 0.01f;
};

struct VqConfig {
  std::size_t latent_dim = 8;
  std::size_t codebook_size = 4096;
  float commitment = 0.15f;
  bool l2_normalize = true;
};

struct TvtConfig {
  std::size_t global_dim = 704;
  std::size_t cond_dim = 192;
  std::size_t slots = 48;
  std::size_t attn_dim = 128;
  std::size_t mlp_hidden = 1024;
  std::size_t gate_hidden = 256;
};

struct ProsodyConfig {
  std::size_t hidden = 256;
  std::size_t kernel = 3;
};

struct DecoderConfig {
  std::vector<std::size_t> strides{2, 4, 5, 8};
  std::size_t base_channels = 32;
  std::size_t init_kernel = 7;
  std::size_t res_kernel = 3;
  std::size_t final_kernel = 7;
  std::size_t dilation = 2;
  std::size_t d_model = 512;
  std::size_t n_layers = 8;
  std::size_t n_heads = 8;
  std::size_t ffn_dim = 2048;
  std::size_t lookback_frames = 100;
  std::size_t lookahead_frames = 0;
  float layer_scale = 0.01f;
};

struct ModelConfig {
  EncoderConfig encoder;
  VqConfig vq;
  TvtConfig tvt;
  ProsodyConfig prosody;
  DecoderConfig decoder;

  // Published architecture: ~38.9 M encoder and ~48.2 M decoder parameters.
  static ModelConfig full() { return {}; }

  // Same topology, strides, window sizes, codebook and TVT interface
  // dimensions as full(), with narrow hidden widths. Used by tests and
  // quick benchmarks.
  static ModelConfig compact() {
    ModelConfig c;
    c.encoder.base_channels = 8;
    c.encoder.d_model = 64;
    c.encoder.n_layers = 2;
    c.encoder.n_heads = 4;
    c.encoder.ffn_dim = 128;
    c.tvt.attn_dim = 32;
    c.tvt.mlp_hidden = 64;
    c.tvt.gate_hidden = 32;
    c.prosody.hidden = 32;
    c.decoder.base_channels = 8;
    c.decoder.d_model = 64;
    c.decoder.n_layers = 2;
    c.decoder.n_heads = 4;
    c.decoder.ffn_dim = 128;
    return c;
  }

  static ModelConfig preset(const std::string& name) {
    if (name == "full") return full();
    if (name == "compact") return compact();
    throw ConfigError("unknown config preset '" + name + "' (expected full or compact)");
  }

  // Channel count after the last encoder downsampling stage.
  std::size_t encoder_top_channels() const { return encoder.base_channels << encoder.strides.size(); }
  // Channel count entering the first decoder upsampling stage.
  std::size_t decoder_top_channels() const { return decoder.base_channels << decoder.strides.size(); }

  void validate() const {
    auto product = [](const std::vector<std::size_t>& v) {
      return std::accumulate(v.begin(), v.end(), std::size_t{1}, std::multiplies<>());
    };
    auto positive = [](std::size_t v, const char* what) {
      if (v == 0) throw ConfigError(std::string(what) + " must be positive");
    };
    if (encoder.strides.empty() || product(encoder.strides) != kHopSamples) {
      throw ConfigError("encoder strides must multiply to " + std::to_string(kHopSamples));
    }
    if (decoder.strides.empty() || product(decoder.strides) != kHopSamples) {
      throw ConfigError("decoder strides must multiply to " + std::to_string(kHopSamples));
    }
    if (!std::equal(encoder.strides.begin(), encoder.strides.end(), decoder.strides.rbegin(), decoder.strides.rend())) {
      throw ConfigError("decoder strides must mirror the encoder strides");
    }
    if (std::any_of(encoder.strides.begin(), encoder.strides.end(), [](std::size_t s) { return s == 0; })) {
      throw ConfigError("strides must be positive");
    }
    for (const auto* t : {&encoder.d_model, &encoder.n_layers, &encoder.n_heads, &encoder.ffn_dim,
                          &encoder.base_channels, &encoder.init_kernel, &encoder.res_kernel, &encoder.final_kernel,
                          &encoder.dilation, &decoder.d_model, &decoder.n_layers, &decoder.n_heads, &decoder.ffn_dim,
                          &decoder.base_channels, &decoder.init_kernel, &decoder.res_kernel, &decoder.final_kernel,
                          &decoder.dilation, &tvt.global_dim, &tvt.cond_dim, &tvt.slots, &tvt.attn_dim,
                          &tvt.mlp_hidden, &tvt.gate_hidden, &prosody.hidden, &prosody.kernel}) {
      positive(*t, "dimension/kernel/layer count");
    }
    if (encoder.d_model != decoder.d_model) throw ConfigError("encoder and decoder d_model must match");
    for (auto [d, h] : {std::pair{encoder.d_model, encoder.n_heads}, std::pair{decoder.d_model, decoder.n_heads}}) {
      if (d % h != 0 || (d / h) % 2 != 0) throw ConfigError("d_model / n_heads must be an even integer");
    }
    if (encoder.lookahead_frames > num::kMaxLookaheadFrames) throw ConfigError("encoder lookahead exceeds 4 frames");
    if (decoder.lookahead_frames != 0) throw ConfigError("decoder context must not look ahead");
    if (vq.codebook_size != 4096) throw ConfigError("VQ codebook size must be 4096");
    if (vq.latent_dim != 8) throw ConfigError("VQ latent dimension must be 8");
  }

  using Field = std::variant<std::size_t*, float*, bool*, std::vector<std::size_t>*>;

  std::vector<std::pair<std::string, Field>> fields() {
    return {
        {"encoder.strides", &encoder.strides},
        {"encoder.base_channels", &encoder.base_channels},
        {"encoder.init_kernel", &encoder.init_kernel},
        {"encoder.res_kernel", &encoder.res_kernel},
        {"encoder.final_kernel", &encoder.final_kernel},
        {"encoder.dilation", &encoder.dilation},
        {"encoder.d_model", &encoder.d_model},
        {"encoder.n_layers", &encoder.n_layers},
        {"encoder.n_heads", &encoder.n_heads},
        {"encoder.ffn_dim", &encoder.ffn_dim},
        {"encoder.lookback_frames", &encoder.lookback_frames},
        {"encoder.lookahead_frames", &encoder.lookahead_frames},
        {"encoder.layer_scale", &encoder.layer_scale},
        {"vq.latent_dim", &vq.latent_dim},
        {"vq.codebook_size", &vq.codebook_size},
        {"vq.commitment", &vq.commitment},
        {"vq.l2_normalize", &vq.l2_normalize},
        {"tvt.global_dim", &tvt.global_dim},
        {"tvt.cond_dim", &tvt.cond_dim},
        {"tvt.slots", &tvt.slots},
        {"tvt.attn_dim", &tvt.attn_dim},
        {"tvt.mlp_hidden", &tvt.mlp_hidden},
        {"tvt.gate_hidden", &tvt.gate_hidden},
        {"prosody.hidden", &prosody.hidden},
        {"prosody.kernel", &prosody.kernel},
        {"decoder.strides", &decoder.strides},
        {"decoder.base_channels", &decoder.base_channels},
        {"decoder.init_kernel", &decoder.init_kernel},
        {"decoder.res_kernel", &decoder.res_kernel},
        {"decoder.final_kernel", &decoder.final_kernel},
        {"decoder.dilation", &decoder.dilation},
        {"decoder.d_model", &decoder.d_model},
        {"decoder.n_layers", &decoder.n_layers},
        {"decoder.n_heads", &decoder.n_heads},
        {"decoder.ffn_dim", &decoder.ffn_dim},
        {"decoder.lookback_frames", &decoder.lookback_frames},
        {"decoder.lookahead_frames", &decoder.lookahead_frames},
        {"decoder.layer_scale", &decoder.layer_scale},
    };
  }

  // Flat `key = value` text, one field per line, lists comma-separated.
  std::string to_text() const {
    ModelConfig copy = *this;
    std::ostringstream os;
    for (auto& [key, field] : copy.fields()) {
      os << key << " = ";
      std::visit(
          [&os](auto* p) {
            using T = std::remove_pointer_t<decltype(p)>;
            if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
              for (std::size_t i = 0; i < p->size(); ++i) os << (i ? "," : "") << (*p)[i];
            } else if constexpr (std::is_same_v<T, bool>) {
              os << (*p ? "true" : "false");
            } else {
              os << *p;
            }
          },
          field);
      os << '\n';
    }
    return os.str();
  }

  // Parses `key = value` lines on top of the full() defaults. Blank lines and
  // `#` comments are ignored; unknown keys are rejected.
  static ModelConfig from_text(const std::string& text, ModelConfig base = full()) {
    auto fields = base.fields();
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    while (std::getline(is, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return f.first == key; });
      if (it == fields.end()) throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
      try {
        std::visit(
            [&value](auto* p) {
              using T = std::remove_pointer_t<decltype(p)>;
              if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
                p->clear();
                std::istringstream vs(value);
                std::string item;
                while (std::getline(vs, item, ',')) p->push_back(std::stoul(item));
              } else if constexpr (std::is_same_v<T, bool>) {
                if (value == "true" || value == "1") *p = true;
                else if (value == "false" || value == "0") *p = false;
                else throw std::invalid_argument(value);
              } else if constexpr (std::is_same_v<T, float>) {
                *p = std::stof(value);
              } else {
                std::size_t used = 0;
                *p = std::stoul(value, &used);
                if (used != value.size()) throw std::invalid_argument(value);
              }
            },
            it->second);
      } catch (const std::logic_error&) {
        throw ConfigError("config line " + std::to_string(lineno) + ": bad value for '" + key + "'");
      }
    }
    base.validate();
    return base;
  }

  friend bool operator==(const ModelConfig& a, const ModelConfig& b) { return a.to_text() == b.to_text(); }
};

}  // namespace tvtsyn
