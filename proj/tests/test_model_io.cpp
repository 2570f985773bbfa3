#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <random>

#include "chunkvc/pipeline.hpp"

using namespace chunkvc;

namespace {

// Hand-rolled encoder written from the container layout.
struct Encoder {
  std::string out;
  void u8(std::uint8_t v) { out.push_back(char(v)); }
  void u16(std::uint16_t v) {
    u8(std::uint8_t(v));
    u8(std::uint8_t(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(std::uint8_t(v >> (8 * i)));
  }
  void f32(float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    u32(bits);
  }
  void tensor(const std::string& name, const WeightTensor& t) {
    u16(std::uint16_t(name.size()));
    out += name;
    u8(std::uint8_t(t.dims.size()));
    for (auto d : t.dims) u32(d);
    for (float f : t.data) f32(f);
  }
};

std::string encode(const ModelConfig& cfg, const ModelWeights& w, std::uint32_t version = 1,
                   const std::string* duplicate = nullptr) {
  Encoder e;
  e.out = "CNVC";
  e.u32(version);
  const std::string text = config_to_text(cfg);
  e.u32(std::uint32_t(text.size()));
  e.out += text;
  e.u32(std::uint32_t(w.size() + (duplicate ? 1 : 0)));
  for (const auto& [name, t] : w.tensors()) {
    e.tensor(name, t);
    if (duplicate && name == *duplicate) e.tensor(name, t);
  }
  return e.out;
}

ModelFormatCode format_error(const std::string& bytes) {
  try {
    deserialize_model(bytes);
  } catch (const ModelFormatError& e) {
    return e.code();
  }
  ADD_FAILURE() << "accepted malformed container";
  return ModelFormatCode::Io;
}

ModelConfig random_config(std::mt19937_64& rng) {
  ModelConfig c = ModelConfig::tiny(rng() % 2 ? Setting::Full : Setting::Fast);
  c.extractor.heads = 1 + int(rng() % 3);
  c.extractor.d_model = c.extractor.heads * (2 + int(rng() % 4));
  c.extractor.layers = 1 + int(rng() % 3);
  c.extractor.classes = 2 + int(rng() % 10);
  c.style.codebook_size = 2 + int(rng() % 6);
  c.style.code_dim = 1 + int(rng() % 6);
  c.decoder.content_dim = 1 + int(rng() % 8);
  c.decoder.mel_hidden = 1 + int(rng() % 8);
  c.vocoder.base_channels = 1 + int(rng() % 3);
  c.style.beta = 0.125 * double(rng() % 5);
  return c;
}

}  // namespace

TEST(Config, DefaultsAreValid) {
  EXPECT_TRUE(validate_config(ModelConfig::full()).empty());
  EXPECT_TRUE(validate_config(ModelConfig::fast()).empty());
  EXPECT_TRUE(validate_config(ModelConfig::tiny(Setting::Full)).empty());
  EXPECT_TRUE(validate_config(ModelConfig::tiny(Setting::Fast)).empty());
}

TEST(Config, UpsampleProductMustEqualHop) {
  ModelConfig c = ModelConfig::full();
  c.vocoder.upsample_factors = {8, 8, 2, 2};
  const auto v = validate_config(c);
  ASSERT_FALSE(v.empty());
  EXPECT_NE(v.front().find("product 256 ≠ hop 320"), std::string::npos) << v.front();
}

TEST(Config, ChunkMsMultipleOf20) {
  ModelConfig c = ModelConfig::full();
  c.session.chunk_ms = 30;
  bool found = false;
  for (const auto& s : validate_config(c)) found = found || s.find("not multiple of 20") != std::string::npos;
  EXPECT_TRUE(found);
}

TEST(Config, ViolationsNameTheField) {
  ModelConfig c = ModelConfig::full();
  c.extractor.heads = 3;
  c.style.code_dim = 0;
  c.vocoder.res_kernels = {3, 4};
  const auto v = validate_config(c);
  auto has = [&v](const std::string& field) {
    for (const auto& s : v) {
      if (s.rfind(field, 0) == 0) return true;
    }
    return false;
  };
  EXPECT_TRUE(has("extractor.d_model"));
  EXPECT_TRUE(has("style.code_dim"));
  EXPECT_TRUE(has("vocoder.res_kernels"));
}

TEST(Config, TextRoundTrip) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    const ModelConfig c = random_config(rng);
    const std::string text = config_to_text(c);
    EXPECT_EQ(config_to_text(config_from_text(text)), text);
  }
}

TEST(Config, TextRejectsUnknownAndDuplicateKeys) {
  EXPECT_THROW(config_from_text("extractor.bogus = 1\n"), ConfigError);
  EXPECT_THROW(config_from_text("extractor.layers = 2\nextractor.layers = 3\n"), ConfigError);
  EXPECT_THROW(config_from_text("extractor.layers = two\n"), ConfigError);
  EXPECT_EQ(config_from_text("# comment\nextractor.layers = 2\n").extractor.layers, 2);
}

TEST(InitWeights, DeterministicPerSeed) {
  const ModelConfig c = ModelConfig::tiny();
  EXPECT_EQ(init_weights(c, 5), init_weights(c, 5));
  EXPECT_FALSE(init_weights(c, 5) == init_weights(c, 6));
}

TEST(InitWeights, RangesFollowFans) {
  const ModelConfig c = ModelConfig::tiny();
  const ModelWeights w = init_weights(c, 1);
  for (const auto& [name, t] : w.tensors()) {
    double bound;
    if (name.ends_with(".bias")) {
      for (float v : t.data) ASSERT_EQ(v, 0.0f) << name;
      continue;
    } else if (name.ends_with("codebook")) {
      bound = 0.1;
    } else {
      const double rf = t.dims.size() == 3 ? t.dims[2] : 1.0;
      bound = std::sqrt(6.0 / (double(t.dims[1]) * rf + double(t.dims[0]) * rf));
    }
    float lo = 0, hi = 0;
    for (float v : t.data) {
      ASSERT_LE(std::abs(v), bound * (1 + 1e-6)) << name;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (t.data.size() > 20) {
      EXPECT_GT(hi - lo, bound * 0.5) << name;
    }
  }
}

TEST(InitWeights, ShapesMatchTable) {
  const ModelConfig c = ModelConfig::full();
  const ModelWeights w = init_weights(c, 0);
  const WeightShapes shapes = weight_shapes(c);
  EXPECT_EQ(w.size(), shapes.size());
  for (const auto& [name, dims] : shapes) {
    ASSERT_TRUE(w.contains(name)) << name;
    EXPECT_EQ(w.at(name).dims, dims) << name;
  }
  EXPECT_EQ(w.at("extractor.layer5.ffn1.weight").dims, (std::vector<std::uint32_t>{1024, 256}));
  EXPECT_EQ(w.at("vocoder.stage1.up.weight").dims, (std::vector<std::uint32_t>{640, 128, 7}));
  EXPECT_EQ(w.at("decoder.mel.conv0.weight").dims, (std::vector<std::uint32_t>{512, 480, 3}));
  EXPECT_EQ(w.at("style.codebook").dims, (std::vector<std::uint32_t>{128, 64}));
  EXPECT_FALSE(w.contains("extractor.labels.bias"));
}

TEST(Container, MatchesHandEncoding) {
  const ModelConfig c = ModelConfig::tiny();
  const ModelWeights w = init_weights(c, 2);
  EXPECT_EQ(serialize_model(c, w), encode(c, w));
}

TEST(Container, RoundTripsBitExact) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 10; ++i) {
    const ModelConfig c = random_config(rng);
    ASSERT_TRUE(validate_config(c).empty()) << validate_config(c).front();
    const ModelWeights w = init_weights(c, rng());
    const std::string bytes = serialize_model(c, w);
    const auto [c2, w2] = deserialize_model(bytes);
    EXPECT_EQ(config_to_text(c2), config_to_text(c));
    EXPECT_EQ(w2, w);
    EXPECT_EQ(serialize_model(c2, w2), bytes);
  }
}

TEST(Container, DistinctErrors) {
  const ModelConfig c = ModelConfig::tiny();
  const ModelWeights w = init_weights(c, 2);
  const std::string good = serialize_model(c, w);

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_EQ(format_error(bad_magic), ModelFormatCode::BadMagic);
  EXPECT_EQ(format_error(encode(c, w, 2)), ModelFormatCode::BadVersion);
  EXPECT_EQ(format_error(good.substr(0, good.size() - 1)), ModelFormatCode::Truncated);
  EXPECT_EQ(format_error(good.substr(0, 6)), ModelFormatCode::Truncated);
  EXPECT_EQ(format_error(good + "x"), ModelFormatCode::TrailingData);
  const std::string dup = "decoder.embedding";
  EXPECT_EQ(format_error(encode(c, w, 1, &dup)), ModelFormatCode::DuplicateTensor);

  ModelWeights reshaped = w;
  reshaped.at("decoder.embedding").dims = {1, std::uint32_t(w.at("decoder.embedding").data.size())};
  EXPECT_EQ(format_error(encode(c, reshaped)), ModelFormatCode::ShapeMismatch);

  ModelWeights nan = w;
  nan.at("vocoder.post.weight").data[0] = NAN;
  EXPECT_EQ(format_error(encode(c, nan)), ModelFormatCode::NonFinite);

  ModelConfig broken = c;
  broken.session.chunk_ms = 30;
  EXPECT_EQ(format_error(encode(broken, w)), ModelFormatCode::BadConfig);
}

TEST(Container, FileRoundTrip) {
  const ModelConfig c = ModelConfig::tiny(Setting::Full);
  const ModelWeights w = init_weights(c, 9);
  const auto dir = std::filesystem::temp_directory_path();
  const auto a = (dir / "chunkvc_io_a.cnvc").string(), b = (dir / "chunkvc_io_b.cnvc").string();
  save_model(c, w, a);
  const auto [c2, w2] = load_model(a);
  save_model(c2, w2, b);
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
  EXPECT_EQ(sa, sb);
  std::remove(a.c_str());
  std::remove(b.c_str());
  try {
    load_model((dir / "chunkvc_missing.cnvc").string());
    FAIL();
  } catch (const ModelFormatError& e) {
    EXPECT_EQ(e.code(), ModelFormatCode::Io);
  }
}

TEST(WeightAudit, ModulesConsumeEveryTensor) {
  for (const ModelConfig& c : {ModelConfig::tiny(Setting::Full), ModelConfig::tiny(Setting::Fast), ModelConfig::full()}) {
    const ModelWeights w = init_weights(c, 1);
    const Model m = Model::build(c, w);
    EXPECT_EQ(m.consumed_weights, w.names());
  }
}

TEST(WeightAudit, MissingTensorIsRejected) {
  const ModelConfig c = ModelConfig::tiny();
  ModelWeights w = init_weights(c, 1);
  ModelWeights partial;
  for (const auto& [name, t] : w.tensors()) {
    if (name != "style.align.key.bias") partial.insert(name, t);
  }
  EXPECT_THROW(Model::build(c, partial), ModelFormatError);
  EXPECT_THROW(w.insert("style.codebook", w.at("style.codebook")), Error);
}
