#pragma once

// Model and session configuration, validation, and the flat text form
// stored inside model containers.

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "chunkvc/tensor.hpp"

namespace chunkvc {

class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class Setting { Full, Fast };

inline std::string to_string(Setting s) { return s == Setting::Full ? "full" : "fast"; }

inline Setting parse_setting(const std::string& s) {
  if (s == "full") return Setting::Full;
  if (s == "fast") return Setting::Fast;
  throw ConfigError("unknown setting '" + s + "' (expected full or fast)");
}

struct MelConfig {
  int sample_rate = 16000;
  int win = 1024;
  int hop = 320;
  int n_mels = 80;
  double f_min = 0.0;
  double f_max = 8000.0;
  double log_floor = 1e-5;

  double frame_ms() const { return 1000.0 * hop / sample_rate; }
};

struct ExtractorConfig {
  int layers = 6;
  int d_model = 256;
  int heads = 4;
  int ffn_dim = 1024;
  int chunk_frames = 4;
  int right_context_chunks = 2;
  int left_context_frames = 8;
  int memory_slots = 4;
  int classes = 100;

  friend bool operator==(const ExtractorConfig&, const ExtractorConfig&) = default;
};

struct StyleConfig {
  int codebook_size = 128;
  int code_dim = 64;
  int timbre_dim = 128;
  int hidden = 128;
  int timbre_layers = 4;
  int token_conv_layers = 2;
  int conv_kernel = 3;
  int token_pool_frames = 4;
  int align_dim = 64;
  int style_dim = 64;
  double beta = 0.25;
};

struct DecoderConfig {
  int content_dim = 256;
  int pitch_hidden = 128;
  int pitch_kernel = 3;
  std::vector<int> pitch_dilations = {1, 2, 4};
  int pitch_embed_dim = 32;
  int mel_hidden = 256;
  int mel_kernel = 3;
  std::vector<int> mel_dilations = {1, 1, 2, 2, 4, 4};
};

struct VocoderConfig {
  int base_channels = 128;
  std::vector<int> upsample_factors = {8, 5, 4, 2};
  std::vector<int> res_kernels = {3, 7, 11};
  std::vector<int> res_dilations = {1, 3, 5};
  int pre_kernel = 7;
  int stage_kernel = 7;
  int post_kernel = 7;
  double leaky_slope = 0.1;

  int upsample_product() const {
    return std::accumulate(upsample_factors.begin(), upsample_factors.end(), 1,
                           std::multiplies<int>());
  }
};

struct SessionConfig {
  Setting setting = Setting::Full;
  int chunk_ms = 80;
  int right_context_chunks = 2;

  static SessionConfig full() { return {Setting::Full, 80, 2}; }
  static SessionConfig fast() { return {Setting::Fast, 20, 0}; }
  static SessionConfig for_setting(Setting s) { return s == Setting::Full ? full() : fast(); }

  int chunk_samples(int sample_rate = 16000) const { return chunk_ms * sample_rate / 1000; }
  int chunk_frames(double frame_ms = 20.0) const { return int(chunk_ms / frame_ms); }
  int right_context_ms() const { return right_context_chunks * chunk_ms; }
};

struct ModelConfig {
  MelConfig mel;
  ExtractorConfig extractor;
  StyleConfig style;
  DecoderConfig decoder;
  VocoderConfig vocoder;
  SessionConfig session;

  static ModelConfig full() { return ModelConfig{}; }

  static ModelConfig fast() {
    ModelConfig c;
    c.extractor.layers = 3;
    c.extractor.chunk_frames = 1;
    c.extractor.right_context_chunks = 0;
    c.session = SessionConfig::fast();
    return c;
  }

  // Reduced dimensions for tests and probes; analysis constants unchanged.
  static ModelConfig tiny(Setting setting = Setting::Fast) {
    ModelConfig c = setting == Setting::Full ? full() : fast();
    c.extractor.layers = setting == Setting::Full ? 3 : 2;
    c.extractor.d_model = 16;
    c.extractor.heads = 2;
    c.extractor.ffn_dim = 32;
    c.extractor.classes = 12;
    c.style.codebook_size = 16;
    c.style.code_dim = 8;
    c.style.timbre_dim = 8;
    c.style.hidden = 12;
    c.style.align_dim = 8;
    c.style.style_dim = 8;
    c.decoder.content_dim = 16;
    c.decoder.pitch_hidden = 8;
    c.decoder.pitch_embed_dim = 4;
    c.decoder.mel_hidden = 16;
    c.vocoder.base_channels = 4;
    return c;
  }

  // Extractor configuration with chunking taken from a session.
  ExtractorConfig extractor_for(const SessionConfig& s) const {
    ExtractorConfig e = extractor;
    e.chunk_frames = s.chunk_frames(mel.frame_ms());
    e.right_context_chunks = s.right_context_chunks;
    return e;
  }
};

inline std::vector<std::string> validate_extractor(const ExtractorConfig& e) {
  std::vector<std::string> v;
  auto positive = [&v](const char* name, int x) {
    if (x < 1) v.push_back(std::string("extractor.") + name + ": must be >= 1");
  };
  auto non_negative = [&v](const char* name, int x) {
    if (x < 0) v.push_back(std::string("extractor.") + name + ": must be >= 0");
  };
  positive("layers", e.layers);
  positive("d_model", e.d_model);
  positive("heads", e.heads);
  positive("ffn_dim", e.ffn_dim);
  positive("chunk_frames", e.chunk_frames);
  positive("classes", e.classes);
  non_negative("right_context_chunks", e.right_context_chunks);
  non_negative("left_context_frames", e.left_context_frames);
  non_negative("memory_slots", e.memory_slots);
  if (e.heads >= 1 && e.d_model >= 1 && e.d_model % e.heads != 0) {
    v.push_back("extractor.d_model: " + std::to_string(e.d_model) + " not divisible by heads " +
                std::to_string(e.heads));
  }
  return v;
}

inline std::vector<std::string> validate_session(const SessionConfig& s) {
  std::vector<std::string> v;
  if (s.chunk_ms <= 0 || s.chunk_ms % 20 != 0) {
    v.push_back("session.chunk_ms: " + std::to_string(s.chunk_ms) + " not multiple of 20");
  }
  if (s.right_context_chunks < 0) v.push_back("session.right_context_chunks: must be >= 0");
  return v;
}

inline std::vector<std::string> validate_config(const ModelConfig& cfg) {
  std::vector<std::string> v;
  const MelConfig& m = cfg.mel;
  if (m.sample_rate != 16000) v.push_back("mel.sample_rate: must be 16000");
  if (m.hop < 1 || m.sample_rate < 1 || 50 * m.hop != m.sample_rate) {
    v.push_back("mel.hop: " + std::to_string(m.hop) + " does not give a 20 ms frame period");
  }
  if (m.win < m.hop) v.push_back("mel.win: must be >= hop");
  if (m.n_mels < 1) v.push_back("mel.n_mels: must be >= 1");
  if (!(m.f_min >= 0.0 && m.f_min < m.f_max && m.f_max <= m.sample_rate / 2.0)) {
    v.push_back("mel.f_min/f_max: need 0 <= f_min < f_max <= sample_rate/2");
  }
  if (!(m.log_floor > 0.0)) v.push_back("mel.log_floor: must be > 0");

  for (auto& s : validate_extractor(cfg.extractor)) v.push_back(s);
  for (auto& s : validate_session(cfg.session)) v.push_back(s);
  if (cfg.session.chunk_ms > 0 && cfg.session.chunk_ms % 20 == 0) {
    if (cfg.extractor.chunk_frames != cfg.session.chunk_ms / 20) {
      v.push_back("extractor.chunk_frames: must equal session.chunk_ms / 20");
    }
    if (cfg.extractor.right_context_chunks != cfg.session.right_context_chunks) {
      v.push_back("extractor.right_context_chunks: must equal session.right_context_chunks");
    }
  }

  const StyleConfig& st = cfg.style;
  if (st.codebook_size < 2) v.push_back("style.codebook_size: must be >= 2");
  auto pos = [&v](const std::string& name, int x) {
    if (x < 1) v.push_back(name + ": must be >= 1");
  };
  pos("style.code_dim", st.code_dim);
  pos("style.timbre_dim", st.timbre_dim);
  pos("style.hidden", st.hidden);
  pos("style.timbre_layers", st.timbre_layers);
  pos("style.token_conv_layers", st.token_conv_layers);
  pos("style.conv_kernel", st.conv_kernel);
  if (st.conv_kernel >= 1 && st.conv_kernel % 2 == 0) v.push_back("style.conv_kernel: must be odd");
  pos("style.token_pool_frames", st.token_pool_frames);
  pos("style.align_dim", st.align_dim);
  pos("style.style_dim", st.style_dim);
  if (!(st.beta >= 0.0)) v.push_back("style.beta: must be >= 0");

  const DecoderConfig& d = cfg.decoder;
  pos("decoder.content_dim", d.content_dim);
  pos("decoder.pitch_hidden", d.pitch_hidden);
  pos("decoder.pitch_kernel", d.pitch_kernel);
  pos("decoder.pitch_embed_dim", d.pitch_embed_dim);
  pos("decoder.mel_hidden", d.mel_hidden);
  pos("decoder.mel_kernel", d.mel_kernel);
  if (d.pitch_dilations.empty()) v.push_back("decoder.pitch_dilations: must be non-empty");
  if (d.mel_dilations.empty()) v.push_back("decoder.mel_dilations: must be non-empty");
  for (int x : d.pitch_dilations) {
    if (x < 1) v.push_back("decoder.pitch_dilations: entries must be >= 1");
  }
  for (int x : d.mel_dilations) {
    if (x < 1) v.push_back("decoder.mel_dilations: entries must be >= 1");
  }

  const VocoderConfig& vc = cfg.vocoder;
  pos("vocoder.base_channels", vc.base_channels);
  if (vc.upsample_factors.empty()) v.push_back("vocoder.upsample_factors: must be non-empty");
  for (int x : vc.upsample_factors) {
    if (x < 1) v.push_back("vocoder.upsample_factors: entries must be >= 1");
  }
  if (vc.upsample_product() != m.hop) {
    v.push_back("vocoder.upsample_factors: product " + std::to_string(vc.upsample_product()) +
                " ≠ hop " + std::to_string(m.hop));
  }
  if (vc.res_kernels.empty()) v.push_back("vocoder.res_kernels: must be non-empty");
  if (vc.res_dilations.empty()) v.push_back("vocoder.res_dilations: must be non-empty");
  auto odd = [&v](const std::string& name, int k) {
    if (k < 1 || k % 2 == 0) v.push_back(name + ": kernel " + std::to_string(k) + " must be odd");
  };
  for (int k : vc.res_kernels) odd("vocoder.res_kernels", k);
  for (int x : vc.res_dilations) {
    if (x < 1) v.push_back("vocoder.res_dilations: entries must be >= 1");
  }
  odd("vocoder.pre_kernel", vc.pre_kernel);
  odd("vocoder.stage_kernel", vc.stage_kernel);
  odd("vocoder.post_kernel", vc.post_kernel);
  return v;
}

// ---------------------------------------------------------------------------
// Flat text form: one "key = value" per line, arrays comma separated.

namespace detail {

inline std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline int parse_int(const std::string& key, const std::string& s) {
  int x = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("config: " + key + ": expected integer, got '" + s + "'");
  }
  return x;
}

inline double parse_double(const std::string& key, const std::string& s) {
  double x = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ConfigError("config: " + key + ": expected number, got '" + s + "'");
  }
  return x;
}

inline std::vector<int> parse_ints(const std::string& key, const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int(key, trim(item)));
  return out;
}

// Binds every config field to its key once, for both directions.
template <typename Cfg, typename Visitor>
void visit_fields(Cfg& c, Visitor&& f) {
  f("mel.sample_rate", c.mel.sample_rate);
  f("mel.win", c.mel.win);
  f("mel.hop", c.mel.hop);
  f("mel.n_mels", c.mel.n_mels);
  f("mel.f_min", c.mel.f_min);
  f("mel.f_max", c.mel.f_max);
  f("mel.log_floor", c.mel.log_floor);
  f("extractor.layers", c.extractor.layers);
  f("extractor.d_model", c.extractor.d_model);
  f("extractor.heads", c.extractor.heads);
  f("extractor.ffn_dim", c.extractor.ffn_dim);
  f("extractor.chunk_frames", c.extractor.chunk_frames);
  f("extractor.right_context_chunks", c.extractor.right_context_chunks);
  f("extractor.left_context_frames", c.extractor.left_context_frames);
  f("extractor.memory_slots", c.extractor.memory_slots);
  f("extractor.classes", c.extractor.classes);
  f("style.codebook_size", c.style.codebook_size);
  f("style.code_dim", c.style.code_dim);
  f("style.timbre_dim", c.style.timbre_dim);
  f("style.hidden", c.style.hidden);
  f("style.timbre_layers", c.style.timbre_layers);
  f("style.token_conv_layers", c.style.token_conv_layers);
  f("style.conv_kernel", c.style.conv_kernel);
  f("style.token_pool_frames", c.style.token_pool_frames);
  f("style.align_dim", c.style.align_dim);
  f("style.style_dim", c.style.style_dim);
  f("style.beta", c.style.beta);
  f("decoder.content_dim", c.decoder.content_dim);
  f("decoder.pitch_hidden", c.decoder.pitch_hidden);
  f("decoder.pitch_kernel", c.decoder.pitch_kernel);
  f("decoder.pitch_dilations", c.decoder.pitch_dilations);
  f("decoder.pitch_embed_dim", c.decoder.pitch_embed_dim);
  f("decoder.mel_hidden", c.decoder.mel_hidden);
  f("decoder.mel_kernel", c.decoder.mel_kernel);
  f("decoder.mel_dilations", c.decoder.mel_dilations);
  f("vocoder.base_channels", c.vocoder.base_channels);
  f("vocoder.upsample_factors", c.vocoder.upsample_factors);
  f("vocoder.res_kernels", c.vocoder.res_kernels);
  f("vocoder.res_dilations", c.vocoder.res_dilations);
  f("vocoder.pre_kernel", c.vocoder.pre_kernel);
  f("vocoder.stage_kernel", c.vocoder.stage_kernel);
  f("vocoder.post_kernel", c.vocoder.post_kernel);
  f("vocoder.leaky_slope", c.vocoder.leaky_slope);
  f("session.setting", c.session.setting);
  f("session.chunk_ms", c.session.chunk_ms);
  f("session.right_context_chunks", c.session.right_context_chunks);
}

}  // namespace detail

inline std::string config_to_text(const ModelConfig& cfg) {
  std::string out;
  detail::visit_fields(cfg, [&out](const char* key, const auto& value) {
    using T = std::decay_t<decltype(value)>;
    out += key;
    out += " = ";
    if constexpr (std::is_same_v<T, int>) {
      out += std::to_string(value);
    } else if constexpr (std::is_same_v<T, double>) {
      out += detail::format_double(value);
    } else if constexpr (std::is_same_v<T, std::vector<int>>) {
      out += detail::join_ints(value);
    } else {
      out += to_string(value);
    }
    out += '\n';
  });
  return out;
}

// Keys missing from the text keep the values of `base`. Unknown keys,
// duplicated keys and malformed values are errors.
inline ModelConfig config_from_text(const std::string& text, ModelConfig base = ModelConfig::full()) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    if (!kv.emplace(key, value).second) throw ConfigError("config: duplicate key " + key);
  }
  detail::visit_fields(base, [&kv](const char* key, auto& value) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    using T = std::decay_t<decltype(value)>;
    if constexpr (std::is_same_v<T, int>) {
      value = detail::parse_int(key, it->second);
    } else if constexpr (std::is_same_v<T, double>) {
      value = detail::parse_double(key, it->second);
    } else if constexpr (std::is_same_v<T, std::vector<int>>) {
      value = detail::parse_ints(key, it->second);
    } else {
      value = parse_setting(it->second);
    }
    kv.erase(it);
  });
  if (!kv.empty()) throw ConfigError("config: unknown key " + kv.begin()->first);
  return base;
}

}  // namespace chunkvc
