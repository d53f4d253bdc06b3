#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "tvtsyn/config.hpp"
#include "tvtsyn/layers.hpp"

namespace tvtsyn {

inline constexpr double kSlerpSmallAngle = 1e-4;
inline constexpr double kSlerpAntipodalPerturb = 1e-6;

// Spherical interpolation between the directions of a and b (both are
// normalized first). alpha = 0 and 1 return the normalized endpoints.
inline std::vector<float> slerp(std::span<const float> a_in, std::span<const float> b_in, float alpha) {
  const std::size_t n = a_in.size();
  if (b_in.size() != n) throw ConfigError("slerp: dimension mismatch");
  if (n == 0) return {};
  auto unit = [n](std::span<const float> v) {
    std::vector<double> u(v.begin(), v.end());
    double s = 0.0;
    for (double x : u) s += x * x;
    if (!(s > 0.0)) throw InputError("slerp: zero vector");
    const double inv = 1.0 / std::sqrt(s);
    for (double& x : u) x *= inv;
    return u;
  };
  auto to_float = [](const std::vector<double>& v) { return std::vector<float>(v.begin(), v.end()); };
  auto dotd = [n](const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
  };

  const std::vector<double> a = unit(a_in);
  std::vector<double> b = unit(b_in);
  if (alpha == 0.0f) return to_float(a);
  if (alpha == 1.0f) return to_float(b);

  std::vector<double> e(n);
  auto geometry = [&]() {
    const double d = dotd(a, b);
    for (std::size_t i = 0; i < n; ++i) e[i] = b[i] - d * a[i];
    const double w = std::sqrt(dotd(e, e));
    return std::pair{std::atan2(w, d), w};
  };
  auto [theta, w] = geometry();

  if (theta > std::numbers::pi - kSlerpSmallAngle) {
    // Nudge b off the antipode along the axis where a is smallest.
    std::size_t axis = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (std::abs(a[i]) < std::abs(a[axis])) axis = i;
    std::vector<double> dir(n);
    for (std::size_t i = 0; i < n; ++i) dir[i] = (i == axis ? 1.0 : 0.0) - a[axis] * a[i];
    const double dn = std::sqrt(dotd(dir, dir));
    if (dn > 0.0) {
      for (std::size_t i = 0; i < n; ++i) b[i] += kSlerpAntipodalPerturb * dir[i] / dn;
      const double bn = std::sqrt(dotd(b, b));
      for (double& x : b) x /= bn;
      std::tie(theta, w) = geometry();
    }
  }

  std::vector<double> r(n);
  if (theta < kSlerpSmallAngle || w == 0.0) {
    for (std::size_t i = 0; i < n; ++i) r[i] = (1.0 - alpha) * a[i] + alpha * b[i];
    const double rn = std::sqrt(dotd(r, r));
    for (double& x : r) x /= rn;
  } else {
    const double c = std::cos(alpha * theta);
    const double s = std::sin(alpha * theta);
    for (std::size_t i = 0; i < n; ++i) r[i] = c * a[i] + s * e[i] / w;
  }
  return to_float(r);
}

// Per-speaker facet memory: keys slots x attn_dim, values slots x cond_dim.
struct GtmMemory {
  Tensor2 keys;
  Tensor2 values;
};

// Everything derived once from a global speaker vector.
struct SpeakerContext {
  std::vector<float> global;  // raw input
  GtmMemory gtm;
  std::vector<float> g_hat;  // unit-norm projection to cond_dim
};

struct FacetRetrieval {
  std::vector<float> value;    // cond_dim
  std::vector<float> weights;  // slots
};

struct TvtSequence {
  Tensor2 s;                 // T x cond_dim
  std::vector<float> alpha;  // T
  Tensor2 facet_weights;     // T x slots
  std::vector<std::uint32_t> top1;
};

class TvtModule {
 public:
  TvtModule() = default;
  TvtModule(const TvtConfig& cfg, std::size_t d_model)
      : cfg_(cfg), d_model_(d_model),
        key_fc1_(cfg.global_dim, cfg.mlp_hidden), key_fc2_(cfg.mlp_hidden, cfg.slots * cfg.attn_dim),
        value_fc1_(cfg.global_dim, cfg.mlp_hidden), value_fc2_(cfg.mlp_hidden, cfg.slots * cfg.cond_dim),
        key_prior_(cfg.slots, cfg.attn_dim), value_prior_(cfg.slots, cfg.cond_dim),
        query_(d_model, cfg.attn_dim, false), global_proj_(cfg.global_dim, cfg.cond_dim),
        gate_fc1_(d_model + 2 * cfg.cond_dim, cfg.gate_hidden), gate_fc2_(cfg.gate_hidden, 1) {}

  void bind(Binder& b, const std::string& name) {
    bind_dense(b, name + ".mlp_k.fc1", key_fc1_);
    bind_dense(b, name + ".mlp_k.fc2", key_fc2_);
    bind_dense(b, name + ".mlp_v.fc1", value_fc1_);
    bind_dense(b, name + ".mlp_v.fc2", value_fc2_);
    auto kp = b.bind({name + ".key_prior", {u32(cfg_.slots), u32(cfg_.attn_dim)}, Init::normal(0.02f)});
    key_prior_.data.assign(kp.begin(), kp.end());
    auto vp = b.bind({name + ".value_prior", {u32(cfg_.slots), u32(cfg_.cond_dim)}, Init::normal(0.02f)});
    value_prior_.data.assign(vp.begin(), vp.end());
    bind_dense(b, name + ".query", query_);
    bind_dense(b, name + ".global_proj", global_proj_);
    bind_dense(b, name + ".gate.fc1", gate_fc1_);
    bind_dense(b, name + ".gate.fc2", gate_fc2_);
    scale_ = b.bind({name + ".scale", {1}, Init::ones()})[0];
  }

  const TvtConfig& config() const { return cfg_; }
  const Tensor2& key_prior() const { return key_prior_; }
  const Tensor2& value_prior() const { return value_prior_; }
  Dense& gate_output() { return gate_fc2_; }
  float scale() const { return scale_; }

  GtmMemory build_gtm(std::span<const float> g) const {
    check_global(g);
    GtmMemory m;
    m.keys = slot_matrix(key_fc2_(activated(key_fc1_(g))), cfg_.attn_dim);
    m.values = slot_matrix(value_fc2_(activated(value_fc1_(g))), cfg_.cond_dim);
    num::add_inplace(m.keys, key_prior_);
    num::add_inplace(m.values, value_prior_);
    return m;
  }

  std::vector<float> project_global(std::span<const float> g) const {
    check_global(g);
    std::vector<float> p = global_proj_(g);
    if (num::l2_norm(p) == 0.0f) throw InputError("tvt: projected speaker vector is zero");
    num::normalize_inplace(p);
    return p;
  }

  SpeakerContext prepare(std::span<const float> g) const {
    SpeakerContext sc;
    sc.global.assign(g.begin(), g.end());
    sc.gtm = build_gtm(g);
    sc.g_hat = project_global(g);
    return sc;
  }

  FacetRetrieval retrieve_facet(std::span<const float> c, const GtmMemory& gtm) const {
    const std::vector<float> q = query_(c);
    FacetRetrieval r;
    r.value.assign(cfg_.cond_dim, 0.0f);
    r.weights.assign(gtm.keys.rows, 0.0f);
    num::AttnWindow window;
    window.mask.reset();
    num::sdpa_rows(q.data(), q.size(), 1, gtm.keys.ptr(), gtm.keys.cols, gtm.values.ptr(), gtm.values.cols,
                   gtm.keys.rows, cfg_.attn_dim, cfg_.cond_dim, window, r.value.data(), cfg_.cond_dim,
                   r.weights.data());
    return r;
  }

  float gate_alpha(std::span<const float> c, std::span<const float> v, std::span<const float> g_hat) const {
    std::vector<float> in;
    in.reserve(gate_fc1_.in);
    in.insert(in.end(), c.begin(), c.end());
    in.insert(in.end(), v.begin(), v.end());
    in.insert(in.end(), g_hat.begin(), g_hat.end());
    return num::sigmoid(gate_fc2_(activated(gate_fc1_(in)))[0]);
  }

  // Timbre stream for content frames (T x d_model).
  TvtSequence sequence(const Tensor2& content, const SpeakerContext& spk,
                       std::optional<float> alpha_override = std::nullopt) const {
    if (content.cols != d_model_) throw ConfigError("tvt: content width mismatch");
    TvtSequence out;
    out.s = Tensor2(content.rows, cfg_.cond_dim);
    out.facet_weights = Tensor2(content.rows, cfg_.slots);
    out.alpha.resize(content.rows);
    out.top1.resize(content.rows);
    for (std::size_t t = 0; t < content.rows; ++t) {
      const FacetRetrieval f = retrieve_facet(content.row(t), spk.gtm);
      const float alpha = alpha_override ? *alpha_override : gate_alpha(content.row(t), f.value, spk.g_hat);
      std::vector<float> v_hat = f.value;
      if (num::l2_norm(v_hat) == 0.0f) v_hat = spk.g_hat;
      const std::vector<float> s = slerp(spk.g_hat, v_hat, alpha);
      for (std::size_t i = 0; i < s.size(); ++i) out.s(t, i) = s[i] * scale_;
      std::copy(f.weights.begin(), f.weights.end(), out.facet_weights.ptr(t));
      out.alpha[t] = alpha;
      out.top1[t] = static_cast<std::uint32_t>(std::max_element(f.weights.begin(), f.weights.end()) - f.weights.begin());
    }
    return out;
  }

 private:
  void check_global(std::span<const float> g) const {
    if (g.size() != cfg_.global_dim) {
      throw InputError("speaker vector has " + std::to_string(g.size()) + " values, expected " +
                       std::to_string(cfg_.global_dim));
    }
  }

  static std::vector<float> activated(std::vector<float> v) {
    num::apply_inplace(std::span<float>(v), num::elu);
    return v;
  }

  Tensor2 slot_matrix(std::vector<float> flat, std::size_t width) const {
    return Tensor2::from(cfg_.slots, width, std::move(flat));
  }

  TvtConfig cfg_;
  std::size_t d_model_ = 0;
  Dense key_fc1_, key_fc2_;
  Dense value_fc1_, value_fc2_;
  Tensor2 key_prior_, value_prior_;
  Dense query_;
  Dense global_proj_;
  Dense gate_fc1_, gate_fc2_;
  float scale_ = 1.0f;
};

}  // namespace tvtsyn
