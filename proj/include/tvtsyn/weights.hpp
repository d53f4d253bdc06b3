#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "tvtsyn/config.hpp"
#include "tvtsyn/error.hpp"

namespace tvtsyn {

struct WeightTensor {
  std::vector<std::uint32_t> shape;
  std::vector<float> data;

  std::size_t numel() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           [](std::size_t a, std::uint32_t b) { return a * b; });
  }
  friend bool operator==(const WeightTensor&, const WeightTensor&) = default;
};

// Named f32 tensors. Entries under "meta." carry the model configuration and
// are not counted as parameters.
class WeightStore {
 public:
  static constexpr std::string_view kMetaPrefix = "meta.";

  void insert(const std::string& name, WeightTensor t) {
    if (t.numel() != t.data.size()) throw FormatError("weight '" + name + "': shape does not match payload");
    if (!entries_.emplace(name, std::move(t)).second) throw FormatError("duplicate weight name '" + name + "'");
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  const WeightTensor& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("missing weight '" + name + "'");
    return it->second;
  }
  WeightTensor& at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("missing weight '" + name + "'");
    return it->second;
  }

  const std::map<std::string, WeightTensor>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  static bool is_meta(const std::string& name) { return name.starts_with(kMetaPrefix); }

  // Parameter count of non-meta entries whose name starts with any prefix.
  std::size_t parameter_count(std::initializer_list<std::string_view> prefixes = {}) const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries_) {
      if (is_meta(name)) continue;
      bool match = prefixes.size() == 0;
      for (auto p : prefixes) match = match || name.starts_with(p);
      if (match) n += t.data.size();
    }
    return n;
  }

  friend bool operator==(const WeightStore&, const WeightStore&) = default;

 private:
  std::map<std::string, WeightTensor> entries_;
};

// ---------------------------------------------------------------------------
// TVTW container: "TVTW", u32 version = 1, u32 entry count, then per entry
// u16 name length, UTF-8 name, u8 ndim, u32 dims, f32 payload. All integers
// and floats little-endian.

inline constexpr char kWeightMagic[4] = {'T', 'V', 'T', 'W'};
inline constexpr std::uint32_t kWeightVersion = 1;

namespace detail {

template <typename T>
void put_le(std::vector<char>& out, T v) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

inline void put_f32s(std::vector<char>& out, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    const auto* p = reinterpret_cast<const char*>(values.data());
    out.insert(out.end(), p, p + values.size_bytes());
  } else {
    for (float f : values) put_le(out, std::bit_cast<std::uint32_t>(f));
  }
}

class Reader {
 public:
  explicit Reader(std::span<const char> bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const std::string& what) {
    need(sizeof(T), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::string get_string(std::size_t n, const std::string& what) {
    need(n, what);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  void get_f32s(std::vector<float>& out, std::size_t n, const std::string& what) {
    if (n > remaining() / 4) throw FormatError(what + ": payload truncated");
    out.resize(n);
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(out.data(), bytes_.data() + pos_, n * 4);
      pos_ += n * 4;
    } else {
      for (std::size_t i = 0; i < n; ++i) out[i] = std::bit_cast<float>(get<std::uint32_t>(what));
    }
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const std::string& what) const {
    if (remaining() < n) throw FormatError(what + ": unexpected end of file");
  }

  std::span<const char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<char> serialize_weights(const WeightStore& store) {
  std::size_t total = 12;
  for (const auto& [name, t] : store.entries()) total += 3 + name.size() + 4 * t.shape.size() + 4 * t.data.size();
  std::vector<char> out;
  out.reserve(total);
  out.insert(out.end(), std::begin(kWeightMagic), std::end(kWeightMagic));
  detail::put_le<std::uint32_t>(out, kWeightVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, t] : store.entries()) {
    if (name.size() > 0xffff) throw FormatError("weight name too long: " + name.substr(0, 64));
    if (t.shape.size() > 0xff) throw FormatError("weight '" + name + "' has too many dimensions");
    detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    detail::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.shape.size()));
    for (auto d : t.shape) detail::put_le<std::uint32_t>(out, d);
    detail::put_f32s(out, t.data);
  }
  return out;
}

inline WeightStore deserialize_weights(std::span<const char> bytes) {
  detail::Reader r(bytes);
  const std::string magic = r.get_string(4, "header");
  if (magic != std::string(kWeightMagic, 4)) throw FormatError("header: bad magic, not a TVTW file");
  const auto version = r.get<std::uint32_t>("header");
  if (version != kWeightVersion) throw FormatError("header: unsupported version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>("header");
  WeightStore store;
  for (std::uint32_t e = 0; e < count; ++e) {
    std::string what = "entry " + std::to_string(e);
    const auto name_len = r.get<std::uint16_t>(what);
    std::string name = r.get_string(name_len, what);
    what += " '" + name + "'";
    WeightTensor t;
    const auto ndim = r.get<std::uint8_t>(what);
    std::size_t numel = 1;
    for (std::uint8_t d = 0; d < ndim; ++d) {
      t.shape.push_back(r.get<std::uint32_t>(what));
      numel *= t.shape.back();
      if (numel > r.remaining()) throw FormatError(what + ": payload truncated");
    }
    r.get_f32s(t.data, numel, what);
    if (store.contains(name)) throw FormatError(what + ": duplicate name");
    store.insert(name, std::move(t));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after " + std::to_string(count) + " entries");
  return store;
}

inline void save_weights(const WeightStore& store, const std::filesystem::path& path) {
  const auto bytes = serialize_weights(store);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw InputError("cannot open '" + path.string() + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw InputError("failed writing '" + path.string() + "'");
}

inline WeightStore load_weights(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open weights '" + path.string() + "'");
  f.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(f.tellg());
  f.seekg(0, std::ios::beg);
  std::vector<char> bytes(size);
  if (!f.read(bytes.data(), static_cast<std::streamsize>(size))) throw InputError("failed reading '" + path.string() + "'");
  return deserialize_weights(bytes);
}

// ---------------------------------------------------------------------------
// Configuration stored alongside the parameters as "meta.config.<key>".

inline void store_config(WeightStore& store, const ModelConfig& cfg) {
  ModelConfig copy = cfg;
  for (auto& [key, field] : copy.fields()) {
    WeightTensor t;
    std::visit(
        [&t](auto* p) {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
            for (auto v : *p) t.data.push_back(static_cast<float>(v));
          } else {
            t.data.push_back(static_cast<float>(*p));
          }
        },
        field);
    t.shape = {static_cast<std::uint32_t>(t.data.size())};
    store.insert("meta.config." + key, std::move(t));
  }
}

inline ModelConfig config_from_store(const WeightStore& store) {
  ModelConfig cfg;
  for (auto& [key, field] : cfg.fields()) {
    const std::string name = "meta.config." + key;
    if (!store.contains(name)) throw ConfigError("weights lack configuration entry '" + name + "'");
    const auto& data = store.at(name).data;
    std::visit(
        [&](auto* p) {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
            p->clear();
            for (float v : data) p->push_back(static_cast<std::size_t>(v));
          } else {
            if (data.size() != 1) throw ConfigError("configuration entry '" + name + "' must be a scalar");
            if constexpr (std::is_same_v<T, float>) *p = data[0];
            else if constexpr (std::is_same_v<T, bool>) *p = data[0] != 0.0f;
            else *p = static_cast<std::size_t>(data[0]);
          }
        },
        field);
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Parameter binding. Every learnable tensor of the model is declared once
// through a Binder; the same walk either loads tensors from a store or
// creates seeded random ones.

struct Init {
  enum class Kind { Uniform, Constant, Normal, UnitRows } kind = Kind::Constant;
  float value = 0.0f;  // bound, constant or standard deviation

  static Init uniform(float bound) { return {Kind::Uniform, bound}; }
  static Init fan_in(std::size_t fan) { return {Kind::Uniform, 1.0f / std::sqrt(static_cast<float>(fan))}; }
  static Init constant(float v) { return {Kind::Constant, v}; }
  static Init zeros() { return constant(0.0f); }
  static Init ones() { return constant(1.0f); }
  static Init normal(float stddev) { return {Kind::Normal, stddev}; }
  static Init unit_rows() { return {Kind::UnitRows, 0.0f}; }
};

struct ParamSlot {
  std::string name;
  std::vector<std::uint32_t> shape;
  Init init;
};

class Binder {
 public:
  virtual ~Binder() = default;
  // Returns the tensor data for the slot; valid until the binder is destroyed.
  virtual std::span<const float> bind(const ParamSlot& slot) = 0;
};

inline std::string shape_string(const std::vector<std::uint32_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

// Reads slots from a store, checks shapes, and records which entries were used.
class LoadBinder : public Binder {
 public:
  explicit LoadBinder(const WeightStore& store) : store_(store) {}

  std::span<const float> bind(const ParamSlot& slot) override {
    if (!store_.contains(slot.name)) throw ConfigError("missing weight '" + slot.name + "'");
    if (!used_.insert(slot.name).second) throw InternalError("weight slot '" + slot.name + "' bound twice");
    const auto& t = store_.at(slot.name);
    if (t.shape != slot.shape) {
      throw ConfigError("weight '" + slot.name + "' has shape " + shape_string(t.shape) + ", expected " +
                        shape_string(slot.shape));
    }
    return t.data;
  }

  // Throws if any non-meta entry of the store was never bound.
  void require_all_used() const {
    for (const auto& [name, t] : store_.entries()) {
      if (!WeightStore::is_meta(name) && used_.count(name) == 0) throw ConfigError("unused weight '" + name + "'");
    }
  }

 private:
  const WeightStore& store_;
  std::set<std::string> used_;
};

// Deterministic seeded source: 64-bit Mersenne Twister with portable
// conversions to uniform and normal variates.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : gen_(seed) {}

  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  float uniform(float lo, float hi) { return static_cast<float>(lo + (hi - lo) * uniform01()); }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * 3.14159265358979323846 * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Generates every slot from its Init rule and records it in a store.
class InitBinder : public Binder {
 public:
  InitBinder(WeightStore& store, std::uint64_t seed) : store_(store), rng_(seed) {}

  std::span<const float> bind(const ParamSlot& slot) override {
    WeightTensor t;
    t.shape = slot.shape;
    t.data.resize(t.numel());
    switch (slot.init.kind) {
      case Init::Kind::Constant:
        std::fill(t.data.begin(), t.data.end(), slot.init.value);
        break;
      case Init::Kind::Uniform:
        for (float& v : t.data) v = rng_.uniform(-slot.init.value, slot.init.value);
        break;
      case Init::Kind::Normal:
        for (float& v : t.data) v = static_cast<float>(rng_.normal() * slot.init.value);
        break;
      case Init::Kind::UnitRows: {
        const std::size_t cols = slot.shape.empty() ? 1 : slot.shape.back();
        for (std::size_t r = 0; r * cols < t.data.size(); ++r) {
          double n2 = 0.0;
          std::vector<double> row(cols);
          do {
            n2 = 0.0;
            for (auto& x : row) {
              x = rng_.normal();
              n2 += x * x;
            }
          } while (n2 == 0.0);
          const double inv = 1.0 / std::sqrt(n2);
          for (std::size_t c = 0; c < cols; ++c) t.data[r * cols + c] = static_cast<float>(row[c] * inv);
        }
        break;
      }
    }
    store_.insert(slot.name, std::move(t));
    return store_.at(slot.name).data;
  }

 private:
  WeightStore& store_;
  SeededRng rng_;
};

}  // namespace tvtsyn
