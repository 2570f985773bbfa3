#pragma once

// Causal pitch predictor and gated causal mel decoder.

#include <string>
#include <vector>

#include "chunkvc/config.hpp"
#include "chunkvc/content_extractor.hpp"
#include "chunkvc/tensor.hpp"
#include "chunkvc/weights.hpp"

namespace chunkvc {

struct DecoderState {
  std::vector<ConvState> pitch;
  std::vector<ConvState> mel;
  friend bool operator==(const DecoderState&, const DecoderState&) = default;
};

struct PitchTrack {
  std::vector<float> log_f0;
};

class AcousticDecoder {
 public:
  AcousticDecoder(const ModelConfig& cfg, WeightReader& r) : cfg_(cfg) {
    const auto& d = cfg.decoder;
    const WeightTensor& table = r.tensor("decoder.embedding");
    embedding_dim_ = table.dims[1];
    embedding_ = table.data;
    classes_ = table.dims[0];

    const int cond = conditioning_dim();
    for (std::size_t l = 0; l < d.pitch_dilations.size(); ++l) {
      const std::string p = "decoder.pitch.conv" + std::to_string(l);
      pitch_convs_.emplace_back(
          ConvSpec{std::size_t(l == 0 ? cond : d.pitch_hidden), std::size_t(d.pitch_hidden),
                   std::size_t(d.pitch_kernel), std::size_t(d.pitch_dilations[l]), true},
          r.span(p + ".weight"), r.span(p + ".bias"));
    }
    pitch_out_ = Linear(1, d.pitch_hidden, r.span("decoder.pitch.out.weight"), r.span("decoder.pitch.out.bias"));
    pitch_embed_ = Linear(d.pitch_embed_dim, 1, r.span("decoder.pitch.embed.weight"),
                          r.span("decoder.pitch.embed.bias"));
    for (std::size_t l = 0; l < d.mel_dilations.size(); ++l) {
      const std::string p = "decoder.mel.conv" + std::to_string(l);
      mel_convs_.emplace_back(
          ConvSpec{std::size_t(l == 0 ? cond + d.pitch_embed_dim : d.mel_hidden),
                   std::size_t(2 * d.mel_hidden), std::size_t(d.mel_kernel),
                   std::size_t(d.mel_dilations[l]), true},
          r.span(p + ".weight"), r.span(p + ".bias"));
    }
    mel_out_ = Linear(cfg.mel.n_mels, d.mel_hidden, r.span("decoder.mel.out.weight"),
                      r.span("decoder.mel.out.bias"));
  }

  // content ∥ timbre ∥ style
  int conditioning_dim() const {
    return cfg_.decoder.content_dim + cfg_.style.timbre_dim + cfg_.style.style_dim;
  }
  int fused_dim() const { return conditioning_dim() + cfg_.decoder.pitch_embed_dim; }

  DecoderState initial_state() const {
    DecoderState s;
    for (const auto& c : pitch_convs_) s.pitch.push_back(c.initial_state());
    for (const auto& c : mel_convs_) s.mel.push_back(c.initial_state());
    return s;
  }

  std::vector<ConvSpec> pitch_specs() const {
    std::vector<ConvSpec> v;
    for (const auto& c : pitch_convs_) v.push_back(c.spec());
    return v;
  }
  std::vector<ConvSpec> mel_specs() const {
    std::vector<ConvSpec> v;
    for (const auto& c : mel_convs_) v.push_back(c.spec());
    return v;
  }

  Tensor2D embed_labels(const ContentLabels& labels) const {
    Tensor2D out(embedding_dim_, labels.size());
    for (std::size_t t = 0; t < labels.size(); ++t) {
      if (labels[t] < 0 || std::size_t(labels[t]) >= classes_) {
        throw ShapeError("embed_labels: label " + std::to_string(labels[t]) + " out of range");
      }
      const float* row = embedding_.data() + std::size_t(labels[t]) * embedding_dim_;
      for (std::size_t c = 0; c < embedding_dim_; ++c) out.at(c, t) = row[c];
    }
    return out;
  }

  PitchTrack predict_pitch(const Tensor2D& features, DecoderState& state) const {
    if (features.channels() != std::size_t(conditioning_dim())) {
      throw ShapeError("predict_pitch: expected " + std::to_string(conditioning_dim()) + " channels, got " +
                       std::to_string(features.channels()));
    }
    Tensor2D h = features;
    for (std::size_t l = 0; l < pitch_convs_.size(); ++l) h = relu(pitch_convs_[l].forward(h, state.pitch[l]));
    const Tensor2D f0 = pitch_out_(h);
    return {std::vector<float>(f0.data().begin(), f0.data().end())};
  }

  Tensor2D embed_pitch(const PitchTrack& pitch) const {
    return pitch_embed_(Tensor2D(1, pitch.log_f0.size(), pitch.log_f0));
  }

  Tensor2D decode_mel(const Tensor2D& fused, DecoderState& state) const {
    if (fused.channels() != std::size_t(fused_dim())) {
      throw ShapeError("decode_mel: expected " + std::to_string(fused_dim()) + " channels, got " +
                       std::to_string(fused.channels()));
    }
    if (fused.frames() < 1) throw ShapeError("decode_mel: no frames");
    Tensor2D h = gated_activation(mel_convs_[0].forward(fused, state.mel[0]));
    for (std::size_t l = 1; l < mel_convs_.size(); ++l) {
      h = add(h, gated_activation(mel_convs_[l].forward(h, state.mel[l])));
    }
    return mel_out_(h);
  }

  // content ∥ timbre ∥ style -> mel, one output frame per input frame.
  Tensor2D run(const Tensor2D& conditioning, DecoderState& state, PitchTrack* pitch_out = nullptr) const {
    PitchTrack pitch = predict_pitch(conditioning, state);
    const Tensor2D pe = embed_pitch(pitch);
    Tensor2D mel = decode_mel(concat_channels({&conditioning, &pe}), state);
    if (pitch_out) *pitch_out = std::move(pitch);
    return mel;
  }

 private:
  ModelConfig cfg_;
  std::size_t embedding_dim_ = 0;
  std::size_t classes_ = 0;
  std::vector<float> embedding_;
  std::vector<Conv1d> pitch_convs_;
  Linear pitch_out_, pitch_embed_;
  std::vector<Conv1d> mel_convs_;
  Linear mel_out_;
};

}  // namespace chunkvc
