#pragma once

// Causal mel-to-waveform generator: causal convolutions, pixel-shuffle
// upsampling, and averaged parallel residual branches after each stage.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "chunkvc/config.hpp"
#include "chunkvc/tensor.hpp"
#include "chunkvc/weights.hpp"

namespace chunkvc {

struct ResidualUnit {
  Conv1d dilated;
  Conv1d plain;
};

struct ResidualBranch {
  std::vector<ResidualUnit> units;
};

struct UpsampleStage {
  std::size_t factor = 1;
  Conv1d up;
  std::vector<ResidualBranch> branches;
};

struct ResidualBranchState {
  std::vector<ConvState> dilated;
  std::vector<ConvState> plain;
  friend bool operator==(const ResidualBranchState&, const ResidualBranchState&) = default;
};

struct StageState {
  ConvState up;
  std::vector<ResidualBranchState> branches;
  friend bool operator==(const StageState&, const StageState&) = default;
};

struct VocoderState {
  ConvState pre;
  std::vector<StageState> stages;
  ConvState post;
  friend bool operator==(const VocoderState&, const VocoderState&) = default;
};

// x + mean_b branch_b(x), where each branch chains
// leaky-ReLU -> dilated conv -> leaky-ReLU -> conv over its dilations.
inline Tensor2D residual_block(const Tensor2D& x, const std::vector<ResidualBranch>& branches,
                               std::vector<ResidualBranchState>& state, float slope) {
  if (branches.empty()) return x;
  if (state.size() != branches.size()) throw ShapeError("residual_block: state mismatch");
  std::vector<double> acc(x.data().size(), 0.0);
  for (std::size_t b = 0; b < branches.size(); ++b) {
    Tensor2D h = x;
    const auto& units = branches[b].units;
    for (std::size_t u = 0; u < units.size(); ++u) {
      if (units[u].dilated.spec().in_channels != x.channels()) {
        throw ShapeError("residual_block: branch channel mismatch");
      }
      h = units[u].dilated.forward(leaky_relu(std::move(h), slope), state[b].dilated[u]);
      h = units[u].plain.forward(leaky_relu(std::move(h), slope), state[b].plain[u]);
    }
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += double(h.data()[i]);
  }
  Tensor2D out = x;
  const double inv = 1.0 / double(branches.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out.data()[i] = float(double(x.data()[i]) + acc[i] * inv);
  return out;
}

// Causal conv to factor * C channels, then shuffle to (C, factor * T).
inline Tensor2D upsample_stage(const Tensor2D& x, const UpsampleStage& stage, ConvState& state) {
  if (x.channels() != stage.up.spec().in_channels) throw ShapeError("upsample_stage: channel mismatch");
  return pixel_shuffle(stage.up.forward(x, state), stage.factor);
}

class Vocoder {
 public:
  Vocoder(const ModelConfig& cfg, WeightReader& r) : cfg_(cfg.vocoder), n_mels_(cfg.mel.n_mels) {
    const auto& v = cfg.vocoder;
    const auto c = std::size_t(v.base_channels);
    auto conv = [&r](const std::string& p, std::size_t in, std::size_t out, int k, int d = 1) {
      return Conv1d(ConvSpec{in, out, std::size_t(k), std::size_t(d), true}, r.span(p + ".weight"),
                    r.span(p + ".bias"));
    };
    pre_ = conv("vocoder.pre", std::size_t(n_mels_), c, v.pre_kernel);
    for (std::size_t n = 0; n < v.upsample_factors.size(); ++n) {
      const std::string p = "vocoder.stage" + std::to_string(n);
      UpsampleStage st;
      st.factor = std::size_t(v.upsample_factors[n]);
      st.up = conv(p + ".up", c, st.factor * c, v.stage_kernel);
      for (std::size_t b = 0; b < v.res_kernels.size(); ++b) {
        ResidualBranch br;
        for (std::size_t u = 0; u < v.res_dilations.size(); ++u) {
          const std::string q = p + ".branch" + std::to_string(b) + ".unit" + std::to_string(u);
          br.units.push_back({conv(q + ".conv1", c, c, v.res_kernels[b], v.res_dilations[u]),
                              conv(q + ".conv2", c, c, v.res_kernels[b])});
        }
        st.branches.push_back(std::move(br));
      }
      stages_.push_back(std::move(st));
    }
    post_ = conv("vocoder.post", c, 1, v.post_kernel);
  }

  std::size_t samples_per_frame() const { return std::size_t(cfg_.upsample_product()); }

  VocoderState initial_state() const {
    VocoderState s;
    s.pre = pre_.initial_state();
    for (const auto& st : stages_) {
      StageState ss;
      ss.up = st.up.initial_state();
      for (const auto& br : st.branches) {
        ResidualBranchState bs;
        for (const auto& u : br.units) {
          bs.dilated.push_back(u.dilated.initial_state());
          bs.plain.push_back(u.plain.initial_state());
        }
        ss.branches.push_back(std::move(bs));
      }
      s.stages.push_back(std::move(ss));
    }
    s.post = post_.initial_state();
    return s;
  }

  // Past mel frames that can influence the first sample of a frame. Walks
  // the layers backwards in integer steps at each layer's native rate.
  std::size_t context_frames() const {
    auto floor_div = [](long long a, long long b) { return a >= 0 ? a / b : -((-a + b - 1) / b); };
    long long earliest = -(long long)post_.spec().history();
    for (std::size_t n = stages_.size(); n-- > 0;) {
      const auto& st = stages_[n];
      long long reach = 0;
      for (const auto& br : st.branches) {
        long long r = 0;
        for (const auto& u : br.units) r += (long long)(u.dilated.spec().history() + u.plain.spec().history());
        reach = std::max(reach, r);
      }
      earliest -= reach;
      earliest = floor_div(earliest, (long long)st.factor);
      earliest -= (long long)st.up.spec().history();
    }
    earliest -= (long long)pre_.spec().history();
    return std::size_t(-earliest);
  }

  const std::vector<UpsampleStage>& stages() const { return stages_; }

  std::vector<float> vocode_chunk(const Tensor2D& mel, VocoderState& state) const {
    if (mel.channels() != std::size_t(n_mels_)) {
      throw ShapeError("vocoder: expected " + std::to_string(n_mels_) + " mel bins, got " +
                       std::to_string(mel.channels()));
    }
    if (mel.frames() == 0) return {};
    const float slope = float(cfg_.leaky_slope);
    Tensor2D h = pre_.forward(mel, state.pre);
    for (std::size_t n = 0; n < stages_.size(); ++n) {
      h = upsample_stage(leaky_relu(std::move(h), slope), stages_[n], state.stages[n].up);
      h = residual_block(h, stages_[n].branches, state.stages[n].branches, slope);
    }
    h = post_.forward(leaky_relu(std::move(h), slope), state.post);
    std::vector<float> out(h.data().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = float(std::tanh(double(h.data()[i])));
    return out;
  }

 private:
  VocoderConfig cfg_;
  int n_mels_;
  Conv1d pre_;
  std::vector<UpsampleStage> stages_;
  Conv1d post_;
};

}  // namespace chunkvc
