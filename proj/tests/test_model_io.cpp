#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "support.hpp"

using namespace tvtsyn;
using namespace tvtsyn::fixtures;

namespace {

std::vector<char> file_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void le(std::vector<char>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace

TEST(RandomInit, SameSeedIsBitwiseIdentical) {
  const auto a = Model::random_init(42, ModelConfig::compact());
  const auto b = Model::random_init(42, ModelConfig::compact());
  EXPECT_TRUE(a == b);
  EXPECT_EQ(serialize_weights(a), serialize_weights(b));
}

TEST(RandomInit, DifferentSeedsDiffer) {
  const auto a = Model::random_init(42, ModelConfig::compact());
  const auto b = Model::random_init(43, ModelConfig::compact());
  std::size_t differing = 0, random_tensors = 0;
  for (const auto& [name, t] : a.entries()) {
    if (WeightStore::is_meta(name)) continue;
    const auto& u = b.at(name);
    ASSERT_EQ(t.shape, u.shape) << name;
    if (name.ends_with(".weight") || name.ends_with("_prior") || name.ends_with(".codebook")) {
      ++random_tensors;
      if (t.data != u.data) ++differing;
    }
  }
  EXPECT_GT(random_tensors, 20u);
  EXPECT_EQ(differing, random_tensors);
}

TEST(RandomInit, InitialisationFamilies) {
  const auto s = Model::random_init(5, ModelConfig::compact());
  std::size_t scales = 0;
  for (const auto& [name, t] : s.entries()) {
    if (name.ends_with(".scale_attn") || name.ends_with(".scale_ffn")) {
      ++scales;
      for (float v : t.data) ASSERT_EQ(v, 0.01f) << name;
    }
  }
  EXPECT_EQ(scales, 2u * (2 + 2));

  for (const char* prior : {"tvt.key_prior", "tvt.value_prior"}) {
    ASSERT_TRUE(s.contains(prior)) << prior;
    const auto& d = s.at(prior).data;
    double sum = 0, sq = 0;
    for (float v : d) sum += v, sq += double(v) * v;
    const double mean = sum / d.size();
    const double sd = std::sqrt(sq / d.size() - mean * mean);
    EXPECT_NEAR(mean, 0.0, 0.003) << prior;
    EXPECT_NEAR(sd, 0.02, 0.002) << prior;
  }

  const auto& cb = s.at("vq.codebook");
  ASSERT_EQ(cb.shape, (std::vector<std::uint32_t>{4096, 8}));
  for (std::size_t r = 0; r < 4096; ++r) {
    double n = 0;
    for (std::size_t c = 0; c < 8; ++c) n += double(cb.data[r * 8 + c]) * cb.data[r * 8 + c];
    ASSERT_NEAR(std::sqrt(n), 1.0, 1e-6) << r;
  }

  // Dense weights stay within the fan-in bound.
  for (const auto& [name, t] : s.entries()) {
    if (!name.ends_with(".weight") || t.shape.size() != 2) continue;
    const float bound = 1.0f / std::sqrt(static_cast<float>(t.shape[1]));
    for (float v : t.data) ASSERT_LE(std::abs(v), bound) << name;
  }

  for (const auto& [name, t] : s.entries()) {
    if (!name.ends_with(".bias") || name.find(".ln") != std::string::npos) continue;
    for (float v : t.data) ASSERT_EQ(v, 0.0f) << name;
  }
}

TEST(RandomInit, FullModelParameterBudget) {
  const auto s = Model::random_init(1, ModelConfig::full());
  const double total = static_cast<double>(s.parameter_count());
  EXPECT_NEAR(total, 86.2e6, 0.15 * 86.2e6) << total;
  EXPECT_EQ(s.parameter_count(), Model::encoder_parameters(s) + Model::decoder_parameters(s));
}

TEST(Container, ByteLayoutMatchesHandEncoding) {
  WeightStore s;
  s.insert("ab", {{2, 1}, {1.0f, -2.5f}});
  s.insert("z", {{}, {0.25f}});
  std::vector<char> expect = {'T', 'V', 'T', 'W'};
  le(expect, 1, 4);
  le(expect, 2, 4);
  le(expect, 2, 2);
  expect.push_back('a');
  expect.push_back('b');
  le(expect, 2, 1);
  le(expect, 2, 4);
  le(expect, 1, 4);
  for (float f : {1.0f, -2.5f}) le(expect, std::bit_cast<std::uint32_t>(f), 4);
  le(expect, 1, 2);
  expect.push_back('z');
  le(expect, 0, 1);
  le(expect, std::bit_cast<std::uint32_t>(0.25f), 4);
  EXPECT_EQ(serialize_weights(s), expect);
  EXPECT_TRUE(deserialize_weights(expect) == s);
}

TEST(Container, SaveLoadSaveIsByteIdentical) {
  const auto dir = temp_dir("model_io_roundtrip");
  const auto store = Model::random_init(7, ModelConfig::compact());
  save_weights(store, dir / "a.tvtw");
  const auto loaded = load_weights(dir / "a.tvtw");
  EXPECT_TRUE(loaded == store);
  save_weights(loaded, dir / "b.tvtw");
  EXPECT_EQ(file_bytes(dir / "a.tvtw"), file_bytes(dir / "b.tvtw"));
}

TEST(Container, NonFiniteAndSignedZeroSurvive) {
  WeightStore s;
  s.insert("x", {{4}, {-0.0f, std::numeric_limits<float>::infinity(), std::numeric_limits<float>::quiet_NaN(),
                       std::numeric_limits<float>::denorm_min()}});
  const auto back = deserialize_weights(serialize_weights(s)).at("x").data;
  const auto& orig = s.at("x").data;
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_EQ(std::bit_cast<std::uint32_t>(back[i]), std::bit_cast<std::uint32_t>(orig[i]));
}

TEST(Container, EmptyStoreHasCountZero) {
  const auto bytes = serialize_weights(WeightStore{});
  ASSERT_EQ(bytes.size(), 12u);
  EXPECT_EQ(std::memcmp(bytes.data(), "TVTW\x01\0\0\0\0\0\0\0", 12), 0);
  EXPECT_EQ(deserialize_weights(bytes).size(), 0u);
}

TEST(Container, CorruptLengthFieldIsRejected) {
  WeightStore s;
  s.insert("alpha", {{3}, {1, 2, 3}});
  s.insert("beta", {{2}, {4, 5}});
  const auto good = serialize_weights(s);
  // Dimension of the second entry: header 12 + alpha (2+5+1+4+12) + beta name (2+4) + ndim 1.
  const std::size_t dim_at = 12 + 24 + 6 + 1;
  auto bad = good;
  bad[dim_at] = 9;
  try {
    deserialize_weights(bad);
    FAIL() << "accepted";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("beta"), std::string::npos) << e.what();
  }
  auto shrunk = good;
  shrunk[dim_at] = 1;
  EXPECT_THROW(deserialize_weights(shrunk), FormatError);  // trailing bytes
  auto name_len = good;
  name_len[12] = 100;
  EXPECT_THROW(deserialize_weights(name_len), FormatError);
  auto count = good;
  count[8] = 3;
  EXPECT_THROW(deserialize_weights(count), FormatError);
}

TEST(Container, HeaderAndTruncationErrors) {
  WeightStore s;
  s.insert("w", {{2}, {1, 2}});
  const auto good = serialize_weights(s);
  auto magic = good;
  magic[0] = 'X';
  EXPECT_THROW(deserialize_weights(magic), FormatError);
  auto version = good;
  version[4] = 2;
  EXPECT_THROW(deserialize_weights(version), FormatError);
  for (std::size_t n = 0; n < good.size(); ++n)
    EXPECT_THROW(deserialize_weights(std::span(good).first(n)), FormatError) << n;
  auto dup = good;
  dup[8] = 2;
  dup.insert(dup.end(), good.begin() + 12, good.end());
  EXPECT_THROW(deserialize_weights(dup), FormatError);
}

TEST(Container, MissingFileIsInputError) {
  EXPECT_THROW(load_weights(temp_dir("model_io_missing") / "nope.tvtw"), InputError);
}

TEST(ModelLoad, RoundTripGivesSameOutput) {
  const auto dir = temp_dir("model_io_model");
  const auto store = Model::random_init(8, ModelConfig::compact());
  save_weights(store, dir / "m.tvtw");
  const Model a = Model::from_store(store);
  const Model b = Model::from_store(load_weights(dir / "m.tvtw"));
  const auto w = random_wave(6400, 9);
  const auto g = speaker_vector(10);
  EXPECT_EQ(a.synthesize(w, a.prepare_speaker(g)).wave, b.synthesize(w, b.prepare_speaker(g)).wave);
  EXPECT_EQ(b.config().to_text(), ModelConfig::compact().to_text());
}

TEST(ModelLoad, EveryMissingUnusedOrMisshapedEntryIsRejected) {
  const auto store = Model::random_init(11, ModelConfig::compact());
  {
    WeightStore s;
    for (const auto& [name, t] : store.entries())
      if (name != "dec.context.ln_out.gamma") s.insert(name, t);
    EXPECT_THROW(Model::from_store(s), ConfigError);
  }
  {
    WeightStore s = store;
    s.insert("dec.extra", {{1}, {0.0f}});
    EXPECT_THROW(Model::from_store(s), ConfigError);
  }
  {
    WeightStore s = store;
    s.at("vq.codebook").shape = {8, 4096};
    EXPECT_THROW(Model::from_store(s), ConfigError);
  }
  {
    WeightStore s;
    for (const auto& [name, t] : store.entries())
      if (name != "meta.config.tvt.slots") s.insert(name, t);
    EXPECT_THROW(Model::from_store(s), ConfigError);
  }
}

TEST(ModelConfig, StrideProductMustBeHop) {
  EXPECT_NO_THROW(ModelConfig::full().validate());
  EXPECT_NO_THROW(ModelConfig::compact().validate());
  for (const std::vector<std::size_t>& bad : std::vector<std::vector<std::size_t>>{
           {8, 5, 4}, {8, 5, 4, 3}, {2, 2, 2, 2}, {320, 2}, {8, 5, 4, 2, 2}, {}}) {
    ModelConfig c;
    c.encoder.strides = bad;
    c.decoder.strides.assign(bad.rbegin(), bad.rend());
    EXPECT_THROW(c.validate(), ConfigError);
  }
  ModelConfig ok;
  ok.encoder.strides = {4, 5, 8, 2};
  ok.decoder.strides = {2, 8, 5, 4};
  EXPECT_NO_THROW(ok.validate());
  ok.decoder.strides = {2, 4, 5, 8};
  EXPECT_THROW(ok.validate(), ConfigError);
}

TEST(ModelConfig, CrossModuleChecks) {
  ModelConfig c;
  c.decoder.d_model = 256;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.encoder.n_heads = 7;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.encoder.lookahead_frames = 5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.vq.codebook_size = 1024;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(ModelConfig::preset("tiny"), ConfigError);
}

TEST(ModelConfig, TextRoundTrip) {
  for (const auto& cfg : {ModelConfig::full(), ModelConfig::compact()}) {
    const auto text = cfg.to_text();
    EXPECT_EQ(ModelConfig::from_text(text).to_text(), text);
  }
  const auto c = ModelConfig::from_text("# comment\n\nencoder.n_layers = 3\nvq.l2_normalize = false\n");
  EXPECT_EQ(c.encoder.n_layers, 3u);
  EXPECT_FALSE(c.vq.l2_normalize);
  EXPECT_EQ(c.decoder.n_layers, ModelConfig::full().decoder.n_layers);
  EXPECT_THROW(ModelConfig::from_text("bogus.key = 1\n"), ConfigError);
  EXPECT_THROW(ModelConfig::from_text("encoder.n_layers 3\n"), ConfigError);
  EXPECT_THROW(ModelConfig::from_text("encoder.n_layers = three\n"), ConfigError);
  EXPECT_THROW(ModelConfig::from_text("encoder.strides = 8,5,4\n"), ConfigError);
}

TEST(ModelConfig, StoredInWeightsMeta) {
  ModelConfig cfg = ModelConfig::compact();
  cfg.encoder.lookahead_frames = 3;
  cfg.vq.commitment = 0.5f;
  const auto s = Model::random_init(12, cfg);
  EXPECT_EQ(config_from_store(s).to_text(), cfg.to_text());
  EXPECT_EQ(s.parameter_count({"meta."}), 0u);
}
