#pragma once

// Reference-side encoders: global timbre embedding, vector-quantized style
// tokens, and the attention that aligns style tokens to content frames.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "chunkvc/config.hpp"
#include "chunkvc/tensor.hpp"
#include "chunkvc/weights.hpp"

namespace chunkvc {

struct Codebook {
  std::size_t dim = 0;
  std::vector<std::vector<float>> entries;
  std::vector<std::uint64_t> usage_counts;

  static Codebook from_tensor(const WeightTensor& t) {
    if (t.dims.size() != 2 || t.dims[0] < 2) throw ShapeError("codebook: need at least 2 entries");
    Codebook cb;
    cb.dim = t.dims[1];
    for (std::size_t k = 0; k < t.dims[0]; ++k) {
      cb.entries.emplace_back(t.data.begin() + k * cb.dim, t.data.begin() + (k + 1) * cb.dim);
    }
    cb.usage_counts.assign(cb.entries.size(), 0);
    return cb;
  }
  std::size_t size() const { return entries.size(); }
};

inline double squared_distance(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    acc += d * d;
  }
  return acc;
}

// Closest entry by Euclidean distance, ties toward the smallest index.
inline std::size_t nearest_code(std::span<const float> z, const Codebook& cb) {
  if (z.size() != cb.dim) {
    throw ShapeError("quantize: latent dim " + std::to_string(z.size()) + " != code dim " +
                     std::to_string(cb.dim));
  }
  std::size_t best = 0;
  double best_d = squared_distance(z, cb.entries[0]);
  for (std::size_t k = 1; k < cb.size(); ++k) {
    const double d = squared_distance(z, cb.entries[k]);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

struct Quantized {
  std::size_t index;
  std::vector<float> code;
};

inline Quantized quantize(std::span<const float> z, Codebook& cb) {
  const std::size_t k = nearest_code(z, cb);
  ++cb.usage_counts[k];
  return {k, cb.entries[k]};
}

// ||z - e||^2 + beta * ||z - e||^2; stop-gradients are identities in a
// forward pass.
inline double cvq_loss(std::span<const float> z, std::span<const float> e, double beta) {
  if (z.size() != e.size()) throw ShapeError("cvq_loss: dimension mismatch");
  const double d = squared_distance(z, e);
  return d + beta * d;
}

inline double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ShapeError("cosine_similarity: dimension mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += double(a[i]) * double(b[i]);
    aa += double(a[i]) * double(a[i]);
    bb += double(b[i]) * double(b[i]);
  }
  if (aa == 0.0 || bb == 0.0) throw Error("cosine_similarity: zero-norm vector");
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

// -log(exp(s+) / (exp(s+) + sum_i exp(s-_i))) with cosine similarity.
inline double contrastive_loss(std::span<const float> e, std::span<const float> z_pos,
                               const std::vector<std::vector<float>>& z_negs) {
  if (z_negs.empty()) throw Error("contrastive_loss: need at least one negative");
  const double pos = std::exp(cosine_similarity(e, z_pos));
  double denom = pos;
  for (const auto& n : z_negs) denom += std::exp(cosine_similarity(e, n));
  return -std::log(pos / denom);
}

// Entries never selected since the last call are replaced by latents drawn
// uniformly from the batch; all usage counts are then cleared.
inline Codebook reinit_unused_codes(Codebook cb, const std::vector<std::vector<float>>& batch_latents,
                                    std::uint64_t seed) {
  if (batch_latents.empty()) throw Error("reinit_unused_codes: empty batch");
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k < cb.size(); ++k) {
    if (cb.usage_counts[k] != 0) continue;
    const std::size_t pick = batch_latents.size() == 1 ? 0 : std::size_t(rng() % batch_latents.size());
    if (batch_latents[pick].size() != cb.dim) throw ShapeError("reinit_unused_codes: latent dim mismatch");
    cb.entries[k] = batch_latents[pick];
  }
  std::fill(cb.usage_counts.begin(), cb.usage_counts.end(), 0);
  return cb;
}

inline std::vector<float> sinusoidal_position(std::size_t pos, std::size_t dim) {
  std::vector<float> pe(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    const double rate = std::pow(10000.0, -double(2 * (i / 2)) / double(dim));
    pe[i] = float(i % 2 == 0 ? std::sin(double(pos) * rate) : std::cos(double(pos) * rate));
  }
  return pe;
}

// Centered convolution over an offline sequence whose edges are extended by
// repeating the first and last frames. A time-constant input therefore maps
// to a time-constant output.
inline Tensor2D replicate_conv(const Conv1d& conv, const Tensor2D& x) {
  const std::size_t hist = conv.spec().history();
  if (hist % 2 != 0) throw ShapeError("replicate_conv: history must be even");
  if (x.frames() == 0) throw ShapeError("replicate_conv: empty input");
  const std::size_t half = hist / 2;
  Tensor2D padded(x.channels(), x.frames() + hist);
  for (std::size_t c = 0; c < x.channels(); ++c) {
    for (std::size_t t = 0; t < padded.frames(); ++t) {
      const std::size_t src = t < half ? 0 : std::min(t - half, x.frames() - 1);
      padded.at(c, t) = x.at(c, src);
    }
  }
  ConvState st{padded.slice_frames(0, hist)};
  return conv.forward(padded.slice_frames(hist, padded.frames()), st);
}

using TimbreEmbedding = std::vector<float>;

struct StyleTokens {
  std::vector<std::size_t> indices;
  Tensor2D codes;  // (code_dim, tokens); column j is the code at position j
  Tensor2D latents;

  std::size_t size() const { return indices.size(); }
};

struct AlignmentKeys {
  Tensor2D keys;
  Tensor2D values;
};

class StyleEncoder {
 public:
  StyleEncoder(const ModelConfig& cfg, WeightReader& r) : cfg_(cfg.style), n_mels_(cfg.mel.n_mels) {
    const auto& st = cfg.style;
    auto conv = [&r](const std::string& p, int out, int in, int k) {
      return Conv1d(ConvSpec{std::size_t(in), std::size_t(out), std::size_t(k), 1, true},
                    r.span(p + ".weight"), r.span(p + ".bias"));
    };
    auto lin = [&r](const std::string& p, int out, int in) {
      return Linear(out, in, r.span(p + ".weight"), r.span(p + ".bias"));
    };
    for (int l = 0; l < st.timbre_layers; ++l) {
      timbre_convs_.push_back(conv("style.timbre.conv" + std::to_string(l), st.hidden,
                                   l == 0 ? n_mels_ : st.hidden, st.conv_kernel));
    }
    timbre_proj_ = lin("style.timbre.proj", st.timbre_dim, st.hidden);
    for (int l = 0; l < st.token_conv_layers; ++l) {
      token_convs_.push_back(conv("style.tokens.conv" + std::to_string(l), st.hidden,
                                  l == 0 ? n_mels_ : st.hidden, st.conv_kernel));
    }
    token_proj_ = lin("style.tokens.proj", st.code_dim, st.hidden);
    codebook_ = Codebook::from_tensor(r.tensor("style.codebook"));
    align_query_ = lin("style.align.query", st.align_dim, cfg.decoder.content_dim + st.timbre_dim);
    align_key_ = lin("style.align.key", st.align_dim, st.code_dim);
    align_value_ = lin("style.align.value", st.style_dim, st.code_dim);
  }

  const Codebook& codebook() const { return codebook_; }
  const StyleConfig& config() const { return cfg_; }

  TimbreEmbedding encode_timbre(const Tensor2D& ref_mel) const {
    check_reference(ref_mel);
    Tensor2D h = ref_mel;
    for (const auto& c : timbre_convs_) h = relu(replicate_conv(c, h));
    const Tensor2D pooled = mean_pool_time(h, h.frames());
    return timbre_proj_(pooled).column(0);
  }

  // One token per token_pool_frames frames; a trailing partial window gives
  // one more token. Usage counts accumulate in `codebook`.
  StyleTokens encode_style_tokens(const Tensor2D& ref_mel, Codebook& codebook) const {
    check_reference(ref_mel);
    Tensor2D h = ref_mel;
    for (const auto& c : token_convs_) h = relu(replicate_conv(c, h));
    StyleTokens tokens;
    tokens.latents = token_proj_(mean_pool_time(h, std::size_t(cfg_.token_pool_frames)));
    tokens.codes = Tensor2D(tokens.latents.channels(), tokens.latents.frames());
    for (std::size_t j = 0; j < tokens.latents.frames(); ++j) {
      const Quantized q = quantize(tokens.latents.column(j), codebook);
      tokens.indices.push_back(q.index);
      for (std::size_t c = 0; c < q.code.size(); ++c) tokens.codes.at(c, j) = q.code[c];
    }
    return tokens;
  }

  StyleTokens encode_style_tokens(const Tensor2D& ref_mel) const {
    Codebook scratch = codebook_;
    return encode_style_tokens(ref_mel, scratch);
  }

  // Keys and values depend only on the reference, so they are built once.
  AlignmentKeys alignment_keys(const StyleTokens& tokens) const {
    if (tokens.size() == 0) throw Error("align_style: empty token sequence");
    Tensor2D with_pos = tokens.codes;
    for (std::size_t j = 0; j < tokens.size(); ++j) {
      const auto pe = sinusoidal_position(j, with_pos.channels());
      for (std::size_t c = 0; c < pe.size(); ++c) with_pos.at(c, j) += pe[c];
    }
    return {align_key_(with_pos), align_value_(with_pos)};
  }

  Tensor2D align_style(const Tensor2D& content_emb, const TimbreEmbedding& timbre,
                       const AlignmentKeys& kv, Tensor2D* weights_out = nullptr) const {
    const Tensor2D t = broadcast_frames(timbre, content_emb.frames());
    const Tensor2D query = align_query_(concat_channels({&content_emb, &t}));
    return scaled_dot_attention(query, kv.keys, kv.values, weights_out);
  }

  Tensor2D align_style(const Tensor2D& content_emb, const TimbreEmbedding& timbre,
                       const StyleTokens& tokens) const {
    return align_style(content_emb, timbre, alignment_keys(tokens));
  }

 private:
  void check_reference(const Tensor2D& mel) const {
    if (mel.frames() < 1) throw Error("style encoder: empty reference");
    if (mel.channels() != std::size_t(n_mels_)) throw ShapeError("style encoder: wrong mel bin count");
  }

  StyleConfig cfg_;
  int n_mels_;
  std::vector<Conv1d> timbre_convs_;
  Linear timbre_proj_;
  std::vector<Conv1d> token_convs_;
  Linear token_proj_;
  Codebook codebook_;
  Linear align_query_, align_key_, align_value_;
};

}  // namespace chunkvc
