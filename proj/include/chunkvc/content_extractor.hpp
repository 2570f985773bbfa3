#pragma once

// Chunk-incremental content encoder with per-layer memory banks and
// cached left-context keys/values. Emits one content label per frame.

#include <cstddef>
#include <deque>
#include <string>
#include <vector>

#include "chunkvc/config.hpp"
#include "chunkvc/tensor.hpp"
#include "chunkvc/weights.hpp"

namespace chunkvc {

class StateError : public Error {
 public:
  using Error::Error;
};

using ContentLabels = std::vector<int>;

struct ExtractorLayerWeights {
  Linear query, key, value, out, ffn1, ffn2;
};

struct ExtractorWeights {
  Linear input;
  std::vector<ExtractorLayerWeights> layers;
  Linear labels;

  static ExtractorWeights bind(const ModelConfig& cfg, WeightReader& r) {
    const auto& e = cfg.extractor;
    auto lin = [&r](const std::string& p, int out, int in, bool bias = true) {
      return Linear(out, in, r.span(p + ".weight"),
                    bias ? r.span(p + ".bias") : std::span<const float>{});
    };
    ExtractorWeights w;
    w.input = lin("extractor.input", e.d_model, cfg.mel.n_mels);
    for (int n = 0; n < e.layers; ++n) {
      const std::string p = "extractor.layer" + std::to_string(n);
      w.layers.push_back({lin(p + ".query", e.d_model, e.d_model), lin(p + ".key", e.d_model, e.d_model),
                          lin(p + ".value", e.d_model, e.d_model), lin(p + ".out", e.d_model, e.d_model),
                          lin(p + ".ffn1", e.ffn_dim, e.d_model), lin(p + ".ffn2", e.d_model, e.ffn_dim)});
    }
    w.labels = lin("extractor.labels", e.classes, e.d_model, false);
    return w;
  }
};

struct ExtractorLayerState {
  std::deque<std::vector<float>> memory;  // oldest first, at most memory_slots
  Tensor2D left_keys;                     // projected keys of the last L frames
  Tensor2D left_values;

  friend bool operator==(const ExtractorLayerState&, const ExtractorLayerState&) = default;
};

struct ExtractorState {
  ExtractorConfig cfg;
  std::vector<ExtractorLayerState> layers;
  std::size_t chunk_index = 0;
  bool finished = false;

  std::size_t memory_size(std::size_t layer) const { return layers.at(layer).memory.size(); }
  friend bool operator==(const ExtractorState&, const ExtractorState&) = default;
};

inline ExtractorState new_extractor_state(const ExtractorConfig& cfg) {
  const auto v = validate_extractor(cfg);
  if (!v.empty()) throw ConfigError("extractor: " + v.front());
  ExtractorState s;
  s.cfg = cfg;
  s.layers.resize(cfg.layers);
  for (auto& l : s.layers) {
    l.left_keys = Tensor2D(cfg.d_model, 0);
    l.left_values = Tensor2D(cfg.d_model, 0);
  }
  return s;
}

// Per-frame argmax of Softmax(U * top); ties go to the smallest class.
inline ContentLabels project_labels(const Tensor2D& top, const Linear& u) {
  if (top.frames() < 1) throw ShapeError("project_labels: no frames");
  const Tensor2D logits = u(top);
  ContentLabels labels(top.frames());
  for (std::size_t t = 0; t < top.frames(); ++t) {
    labels[t] = int(argmax(softmax(logits.column(t))));
  }
  return labels;
}

// Heads split the feature axis into equal contiguous slices.
inline Tensor2D multi_head_attention(const Tensor2D& q, const Tensor2D& k, const Tensor2D& v,
                                     std::size_t heads) {
  const std::size_t d = q.channels();
  const std::size_t dh = d / heads;
  Tensor2D out(v.channels(), q.frames());
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor2D o = scaled_dot_attention(q.slice_channels(h * dh, (h + 1) * dh),
                                            k.slice_channels(h * dh, (h + 1) * dh),
                                            v.slice_channels(h * dh, (h + 1) * dh));
    for (std::size_t c = 0; c < dh; ++c) {
      std::copy(o.row(c).begin(), o.row(c).end(), out.row(h * dh + c).begin());
    }
  }
  return out;
}

inline Tensor2D memory_tensor(const std::deque<std::vector<float>>& memory, std::size_t dim) {
  Tensor2D m(dim, memory.size());
  for (std::size_t j = 0; j < memory.size(); ++j) {
    for (std::size_t c = 0; c < dim; ++c) m.at(c, j) = memory[j][c];
  }
  return m;
}

inline Tensor2D feed_forward(const ExtractorLayerWeights& w, const Tensor2D& x) {
  return w.ffn2(relu(w.ffn1(x)));
}

namespace detail {

struct LayerOutput {
  Tensor2D chunk;
  Tensor2D right;
  std::vector<float> summary_memory;
};

// One layer for one chunk. `memory`, `left_keys` and `left_values` are the
// layer's state before this chunk.
inline LayerOutput extractor_layer(const ExtractorLayerWeights& w, const ExtractorConfig& cfg,
                                   const Tensor2D& memory, const Tensor2D& left_keys,
                                   const Tensor2D& left_values, const Tensor2D& chunk,
                                   const Tensor2D& right, Tensor2D* chunk_keys,
                                   Tensor2D* chunk_values) {
  const Tensor2D summary = mean_pool_time(chunk, std::size_t(cfg.chunk_frames));
  const Tensor2D queries = w.query(concat_frames({&chunk, &right, &summary}));

  const Tensor2D kc = w.key(chunk), vc = w.value(chunk);
  const Tensor2D kr = w.key(right), vr = w.value(right);
  const Tensor2D km = w.key(memory), vm = w.value(memory);
  const Tensor2D keys = concat_frames({&km, &left_keys, &kc, &kr});
  const Tensor2D values = concat_frames({&vm, &left_values, &vc, &vr});

  const Tensor2D attended = w.out(multi_head_attention(queries, keys, values, std::size_t(cfg.heads)));
  const std::size_t nc = chunk.frames(), nr = right.frames();
  LayerOutput out;
  out.chunk = feed_forward(w, add(attended.slice_frames(0, nc), chunk));
  out.right = nr ? feed_forward(w, add(attended.slice_frames(nc, nc + nr), right))
                 : Tensor2D(chunk.channels(), 0);
  out.summary_memory = attended.column(nc + nr);
  if (chunk_keys) *chunk_keys = kc;
  if (chunk_values) *chunk_values = vc;
  return out;
}

inline Tensor2D keep_last(const Tensor2D& old, const Tensor2D& fresh, std::size_t keep) {
  const Tensor2D all = concat_frames({&old, &fresh});
  const std::size_t ch = old.channels();
  if (all.frames() == 0) return Tensor2D(ch, 0);
  const std::size_t n = std::min(keep, all.frames());
  return all.slice_frames(all.frames() - n, all.frames());
}

}  // namespace detail

class ContentExtractor {
 public:
  ContentExtractor(const ModelConfig& cfg, WeightReader& r)
      : model_cfg_(cfg), weights_(ExtractorWeights::bind(cfg, r)) {}

  const ExtractorWeights& weights() const { return weights_; }

  // `chunk` holds chunk_frames mel frames (fewer only at stream end);
  // `right` holds right_context_chunks * chunk_frames frames, zero filled
  // past the end of the stream. `top` receives the last layer's chunk rows.
  ContentLabels process_chunk(ExtractorState& state, const Tensor2D& chunk, const Tensor2D& right,
                              Tensor2D* top = nullptr) const {
    const ExtractorConfig& cfg = state.cfg;
    check_state(state);
    if (state.finished) throw StateError("extractor: chunk pushed after flush");
    const auto n_mels = std::size_t(model_cfg_.mel.n_mels);
    if (chunk.channels() != n_mels || chunk.frames() < 1 ||
        chunk.frames() > std::size_t(cfg.chunk_frames)) {
      throw ShapeError("extractor: chunk must have 1.." + std::to_string(cfg.chunk_frames) +
                       " frames of " + std::to_string(n_mels) + " bins");
    }
    const std::size_t rc = std::size_t(cfg.right_context_chunks * cfg.chunk_frames);
    if (right.frames() != rc || (rc > 0 && right.channels() != n_mels)) {
      throw ShapeError("extractor: right context must have " + std::to_string(rc) + " frames");
    }

    Tensor2D c = weights_.input(chunk);
    Tensor2D rctx = rc ? weights_.input(right) : Tensor2D(std::size_t(cfg.d_model), 0);
    std::vector<std::vector<float>> new_memory(cfg.layers);
    for (int n = 0; n < cfg.layers; ++n) {
      ExtractorLayerState& ls = state.layers[n];
      Tensor2D kc, vc;
      const Tensor2D mem = memory_tensor(ls.memory, std::size_t(cfg.d_model));
      detail::LayerOutput o = detail::extractor_layer(weights_.layers[n], cfg, mem, ls.left_keys,
                                                      ls.left_values, c, rctx, &kc, &vc);
      ls.left_keys = detail::keep_last(ls.left_keys, kc, std::size_t(cfg.left_context_frames));
      ls.left_values = detail::keep_last(ls.left_values, vc, std::size_t(cfg.left_context_frames));
      new_memory[n] = std::move(o.summary_memory);
      c = std::move(o.chunk);
      rctx = std::move(o.right);
    }
    // The summary from layer n feeds layer n + 1 on the next chunk.
    for (int n = 0; n + 1 < cfg.layers; ++n) {
      auto& bank = state.layers[n + 1].memory;
      if (cfg.memory_slots == 0) continue;
      bank.push_back(std::move(new_memory[n]));
      while (bank.size() > std::size_t(cfg.memory_slots)) bank.pop_front();
    }
    ++state.chunk_index;
    ContentLabels labels = project_labels(c, weights_.labels);
    if (top) *top = std::move(c);
    return labels;
  }

  // Final partial chunk with an all-zero right context. A second call
  // returns nothing.
  ContentLabels flush(ExtractorState& state, const Tensor2D& tail) const {
    check_state(state);
    if (state.finished) return {};
    ContentLabels labels;
    if (tail.frames() > 0) {
      const std::size_t rc = std::size_t(state.cfg.right_context_chunks * state.cfg.chunk_frames);
      labels = process_chunk(state, tail, Tensor2D(std::size_t(model_cfg_.mel.n_mels), rc));
    }
    state.finished = true;
    return labels;
  }

 private:
  void check_state(const ExtractorState& state) const {
    const ExtractorConfig& s = state.cfg;
    const ExtractorConfig& m = model_cfg_.extractor;
    if (s.layers != m.layers || s.d_model != m.d_model || s.heads != m.heads ||
        s.ffn_dim != m.ffn_dim || s.classes != m.classes ||
        state.layers.size() != std::size_t(s.layers)) {
      throw StateError("extractor: state was created for a different configuration");
    }
  }

  ModelConfig model_cfg_;
  ExtractorWeights weights_;
};

}  // namespace chunkvc
