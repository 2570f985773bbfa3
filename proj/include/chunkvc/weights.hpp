#pragma once

// Named weight tensors: the config-derived shape table, seeded
// initialization, and the .cnvc binary container.
//
// Container layout (all integers little-endian):
//   "CNVC" | u32 version | u32 config length | config text (UTF-8)
//   u32 tensor count | per tensor: u16 name length, name, u8 rank,
//   u32 dims[rank], float32 payload in row-major (channel-major) order.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "chunkvc/config.hpp"

namespace chunkvc {

struct WeightTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
  friend bool operator==(const WeightTensor&, const WeightTensor&) = default;
};

using WeightShapes = std::vector<std::pair<std::string, std::vector<std::uint32_t>>>;

enum class InitKind { Xavier, Zero, Codebook };

inline InitKind init_kind_for(const std::string& name) {
  auto ends_with = [&name](const char* suffix) {
    const std::size_t n = std::strlen(suffix);
    return name.size() >= n && name.compare(name.size() - n, n, suffix) == 0;
  };
  if (ends_with(".bias")) return InitKind::Zero;
  if (ends_with("codebook")) return InitKind::Codebook;
  return InitKind::Xavier;
}

// Every tensor a model with `cfg` needs, in a fixed order.
inline WeightShapes weight_shapes(const ModelConfig& cfg) {
  using U = std::uint32_t;
  WeightShapes s;
  auto lin = [&s](const std::string& p, int out, int in, bool bias = true) {
    s.push_back({p + ".weight", {U(out), U(in)}});
    if (bias) s.push_back({p + ".bias", {U(out)}});
  };
  auto conv = [&s](const std::string& p, int out, int in, int k) {
    s.push_back({p + ".weight", {U(out), U(in), U(k)}});
    s.push_back({p + ".bias", {U(out)}});
  };
  const auto& e = cfg.extractor;
  lin("extractor.input", e.d_model, cfg.mel.n_mels);
  for (int n = 0; n < e.layers; ++n) {
    const std::string p = "extractor.layer" + std::to_string(n);
    lin(p + ".query", e.d_model, e.d_model);
    lin(p + ".key", e.d_model, e.d_model);
    lin(p + ".value", e.d_model, e.d_model);
    lin(p + ".out", e.d_model, e.d_model);
    lin(p + ".ffn1", e.ffn_dim, e.d_model);
    lin(p + ".ffn2", e.d_model, e.ffn_dim);
  }
  lin("extractor.labels", e.classes, e.d_model, false);

  const auto& st = cfg.style;
  for (int l = 0; l < st.timbre_layers; ++l) {
    conv("style.timbre.conv" + std::to_string(l), st.hidden, l == 0 ? cfg.mel.n_mels : st.hidden,
         st.conv_kernel);
  }
  lin("style.timbre.proj", st.timbre_dim, st.hidden);
  for (int l = 0; l < st.token_conv_layers; ++l) {
    conv("style.tokens.conv" + std::to_string(l), st.hidden, l == 0 ? cfg.mel.n_mels : st.hidden,
         st.conv_kernel);
  }
  lin("style.tokens.proj", st.code_dim, st.hidden);
  s.push_back({"style.codebook", {U(st.codebook_size), U(st.code_dim)}});
  const auto& d = cfg.decoder;
  lin("style.align.query", st.align_dim, d.content_dim + st.timbre_dim);
  lin("style.align.key", st.align_dim, st.code_dim);
  lin("style.align.value", st.style_dim, st.code_dim);

  s.push_back({"decoder.embedding", {U(e.classes), U(d.content_dim)}});
  const int cond = d.content_dim + st.timbre_dim + st.style_dim;
  for (std::size_t l = 0; l < d.pitch_dilations.size(); ++l) {
    conv("decoder.pitch.conv" + std::to_string(l), d.pitch_hidden, l == 0 ? cond : d.pitch_hidden,
         d.pitch_kernel);
  }
  lin("decoder.pitch.out", 1, d.pitch_hidden);
  lin("decoder.pitch.embed", d.pitch_embed_dim, 1);
  for (std::size_t l = 0; l < d.mel_dilations.size(); ++l) {
    conv("decoder.mel.conv" + std::to_string(l), 2 * d.mel_hidden,
         l == 0 ? cond + d.pitch_embed_dim : d.mel_hidden, d.mel_kernel);
  }
  lin("decoder.mel.out", cfg.mel.n_mels, d.mel_hidden);

  const auto& v = cfg.vocoder;
  const int c = v.base_channels;
  conv("vocoder.pre", c, cfg.mel.n_mels, v.pre_kernel);
  for (std::size_t n = 0; n < v.upsample_factors.size(); ++n) {
    const std::string p = "vocoder.stage" + std::to_string(n);
    conv(p + ".up", v.upsample_factors[n] * c, c, v.stage_kernel);
    for (std::size_t b = 0; b < v.res_kernels.size(); ++b) {
      for (std::size_t u = 0; u < v.res_dilations.size(); ++u) {
        const std::string q = p + ".branch" + std::to_string(b) + ".unit" + std::to_string(u);
        conv(q + ".conv1", c, c, v.res_kernels[b]);
        conv(q + ".conv2", c, c, v.res_kernels[b]);
      }
    }
  }
  conv("vocoder.post", 1, c, v.post_kernel);
  return s;
}

class ModelWeights {
 public:
  using Map = std::map<std::string, WeightTensor>;

  void insert(const std::string& name, WeightTensor t) {
    if (!tensors_.emplace(name, std::move(t)).second) {
      throw Error("weights: duplicate tensor " + name);
    }
  }
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const WeightTensor& at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw Error("weights: missing tensor " + name);
    return it->second;
  }
  WeightTensor& at(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw Error("weights: missing tensor " + name);
    return it->second;
  }
  const Map& tensors() const { return tensors_; }
  std::size_t size() const { return tensors_.size(); }

  std::set<std::string> names() const {
    std::set<std::string> out;
    for (const auto& [k, _] : tensors_) out.insert(k);
    return out;
  }

  friend bool operator==(const ModelWeights&, const ModelWeights&) = default;

 private:
  Map tensors_;
};

// Read access to weights that records which names were consumed.
class WeightReader {
 public:
  explicit WeightReader(const ModelWeights& w) : weights_(&w) {}

  const WeightTensor& tensor(const std::string& name) {
    used_.insert(name);
    return weights_->at(name);
  }
  std::span<const float> span(const std::string& name) { return tensor(name).data; }
  const std::set<std::string>& used() const { return used_; }

 private:
  const ModelWeights* weights_;
  std::set<std::string> used_;
};

// ---------------------------------------------------------------------------
// Seeded initialization. Each tensor draws from its own stream keyed by
// (name, seed), so adding a tensor never perturbs the others.

namespace detail {

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

struct SplitMix64 {
  std::uint64_t state;
  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  // Uniform in [-1, 1) with 24-bit resolution.
  double symmetric() { return double(next() >> 40) * 0x1.0p-23 - 1.0; }
};

inline std::pair<double, double> fans(const std::vector<std::uint32_t>& dims) {
  if (dims.size() == 1) return {double(dims[0]), double(dims[0])};
  const double receptive = dims.size() == 3 ? double(dims[2]) : 1.0;
  return {double(dims[1]) * receptive, double(dims[0]) * receptive};
}

}  // namespace detail

inline ModelWeights init_weights(const ModelConfig& cfg, std::uint64_t seed) {
  const auto violations = validate_config(cfg);
  if (!violations.empty()) throw ConfigError("init_weights: invalid config: " + violations.front());
  ModelWeights w;
  for (const auto& [name, dims] : weight_shapes(cfg)) {
    WeightTensor t;
    t.dims = dims;
    t.data.assign(t.element_count(), 0.0f);
    const InitKind kind = init_kind_for(name);
    if (kind != InitKind::Zero) {
      detail::SplitMix64 rng{detail::fnv1a(name) ^ (seed * 0x9e3779b97f4a7c15ull)};
      double bound = 0.1;
      if (kind == InitKind::Xavier) {
        const auto [fan_in, fan_out] = detail::fans(dims);
        bound = std::sqrt(6.0 / (fan_in + fan_out));
      }
      for (float& x : t.data) x = float(bound * rng.symmetric());
    }
    w.insert(name, std::move(t));
  }
  return w;
}

// ---------------------------------------------------------------------------
// Container I/O

enum class ModelFormatCode {
  Io,
  BadMagic,
  BadVersion,
  Truncated,
  DuplicateTensor,
  ShapeMismatch,
  TrailingData,
  NonFinite,
  BadConfig,
};

inline const char* to_string(ModelFormatCode c) {
  switch (c) {
    case ModelFormatCode::Io: return "io";
    case ModelFormatCode::BadMagic: return "bad-magic";
    case ModelFormatCode::BadVersion: return "bad-version";
    case ModelFormatCode::Truncated: return "truncated";
    case ModelFormatCode::DuplicateTensor: return "duplicate-tensor";
    case ModelFormatCode::ShapeMismatch: return "shape-mismatch";
    case ModelFormatCode::TrailingData: return "trailing-data";
    case ModelFormatCode::NonFinite: return "non-finite";
    case ModelFormatCode::BadConfig: return "bad-config";
  }
  return "unknown";
}

class ModelFormatError : public Error {
 public:
  ModelFormatError(ModelFormatCode code, const std::string& what)
      : Error(std::string("model file (") + to_string(code) + "): " + what), code_(code) {}
  ModelFormatCode code() const { return code_; }

 private:
  ModelFormatCode code_;
};

inline constexpr char kModelMagic[4] = {'C', 'N', 'V', 'C'};
inline constexpr std::uint32_t kModelVersion = 1;

static_assert(std::endian::native == std::endian::little, "container I/O assumes little-endian");

namespace detail {

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u16(std::uint16_t v) { bytes(&v, 2); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  const std::string& buffer() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::string& buf) : buf_(buf) {}
  void bytes(void* p, std::size_t n, const char* what) {
    if (n > buf_.size() - pos_) {
      throw ModelFormatError(ModelFormatCode::Truncated,
                             std::string("unexpected end of file reading ") + what);
    }
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8(const char* what) { std::uint8_t v; bytes(&v, 1, what); return v; }
  std::uint16_t u16(const char* what) { std::uint16_t v; bytes(&v, 2, what); return v; }
  std::uint32_t u32(const char* what) { std::uint32_t v; bytes(&v, 4, what); return v; }
  std::string str(std::size_t n, const char* what) {
    std::string s(n, '\0');
    if (n) bytes(s.data(), n, what);
    return s;
  }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  const std::string& buf_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_model(const ModelConfig& cfg, const ModelWeights& weights) {
  detail::ByteWriter w;
  w.bytes(kModelMagic, 4);
  w.u32(kModelVersion);
  const std::string text = config_to_text(cfg);
  w.u32(std::uint32_t(text.size()));
  w.bytes(text.data(), text.size());
  w.u32(std::uint32_t(weights.size()));
  for (const auto& [name, t] : weights.tensors()) {
    w.u16(std::uint16_t(name.size()));
    w.bytes(name.data(), name.size());
    w.u8(std::uint8_t(t.dims.size()));
    for (auto d : t.dims) w.u32(d);
    w.bytes(t.data.data(), t.data.size() * sizeof(float));
  }
  return w.buffer();
}

// Checks the tensor set against the shape table of `cfg`.
inline void check_weights(const ModelConfig& cfg, const ModelWeights& weights) {
  const WeightShapes shapes = weight_shapes(cfg);
  for (const auto& [name, dims] : shapes) {
    if (!weights.contains(name)) {
      throw ModelFormatError(ModelFormatCode::ShapeMismatch, "missing tensor " + name);
    }
    const WeightTensor& t = weights.at(name);
    if (t.dims != dims) {
      throw ModelFormatError(ModelFormatCode::ShapeMismatch, "tensor " + name +
                                                                 " has wrong shape for config");
    }
    for (float x : t.data) {
      if (!std::isfinite(x)) {
        throw ModelFormatError(ModelFormatCode::NonFinite, "tensor " + name + " has non-finite values");
      }
    }
  }
  if (shapes.size() != weights.size()) {
    std::set<std::string> expected;
    for (const auto& [name, _] : shapes) expected.insert(name);
    for (const auto& [name, _] : weights.tensors()) {
      if (!expected.count(name)) {
        throw ModelFormatError(ModelFormatCode::ShapeMismatch, "unexpected tensor " + name);
      }
    }
  }
}

inline std::pair<ModelConfig, ModelWeights> deserialize_model(const std::string& buf) {
  detail::ByteReader r(buf);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kModelMagic, 4) != 0) {
    throw ModelFormatError(ModelFormatCode::BadMagic, "not a CNVC container");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kModelVersion) {
    throw ModelFormatError(ModelFormatCode::BadVersion, "unsupported version " + std::to_string(version));
  }
  const std::uint32_t text_len = r.u32("config length");
  const std::string text = r.str(text_len, "config text");
  ModelConfig cfg;
  try {
    cfg = config_from_text(text);
  } catch (const ConfigError& e) {
    throw ModelFormatError(ModelFormatCode::BadConfig, e.what());
  }
  const auto violations = validate_config(cfg);
  if (!violations.empty()) throw ModelFormatError(ModelFormatCode::BadConfig, violations.front());

  ModelWeights weights;
  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = r.u16("tensor name length");
    std::string name = r.str(name_len, "tensor name");
    const std::uint8_t rank = r.u8("tensor rank");
    WeightTensor t;
    for (std::uint8_t k = 0; k < rank; ++k) t.dims.push_back(r.u32("tensor dims"));
    const std::size_t n = t.element_count();
    if (n > r.remaining() / sizeof(float)) {
      throw ModelFormatError(ModelFormatCode::Truncated, "payload of " + name + " runs past end of file");
    }
    t.data.resize(n);
    r.bytes(t.data.data(), n * sizeof(float), "tensor payload");
    if (weights.contains(name)) {
      throw ModelFormatError(ModelFormatCode::DuplicateTensor, "tensor " + name + " appears twice");
    }
    weights.insert(name, std::move(t));
  }
  if (r.remaining() != 0) {
    throw ModelFormatError(ModelFormatCode::TrailingData,
                           std::to_string(r.remaining()) + " bytes after last tensor");
  }
  check_weights(cfg, weights);
  return {std::move(cfg), std::move(weights)};
}

inline void save_model(const ModelConfig& cfg, const ModelWeights& weights, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ModelFormatError(ModelFormatCode::Io, "cannot open " + path + " for writing");
  const std::string buf = serialize_model(cfg, weights);
  f.write(buf.data(), std::streamsize(buf.size()));
  if (!f) throw ModelFormatError(ModelFormatCode::Io, "write failed for " + path);
}

inline std::pair<ModelConfig, ModelWeights> load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ModelFormatError(ModelFormatCode::Io, "cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_model(buf);
}

}  // namespace chunkvc
