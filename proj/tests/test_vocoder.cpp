#include <gtest/gtest.h>

#include <random>

#include "chunkvc/probes.hpp"

using namespace chunkvc;

namespace {

Vocoder make_vocoder(const ModelConfig& c, const ModelWeights& w) {
  WeightReader r(w);
  return Vocoder(c, r);
}

Conv1d random_conv(const ConvSpec& s, std::mt19937_64& rng, float scale = 0.5f) {
  std::uniform_real_distribution<float> u(-scale, scale);
  std::vector<float> w(s.out_channels * s.in_channels * s.kernel), b(s.out_channels);
  for (auto& v : w) v = u(rng);
  for (auto& v : b) v = u(rng);
  return Conv1d(s, w, b);
}

}  // namespace

TEST(Vocoder, FourFramesGive1280Samples) {
  const ModelConfig c = ModelConfig::tiny();
  const Vocoder v = make_vocoder(c, init_weights(c, 1));
  EXPECT_EQ(v.samples_per_frame(), 320u);
  VocoderState st = v.initial_state();
  EXPECT_EQ(v.vocode_chunk(noise_tensor(80, 4, 2), st).size(), 1280u);
  for (std::size_t n = 1; n <= 16; ++n) {
    VocoderState s = v.initial_state();
    EXPECT_EQ(v.vocode_chunk(noise_tensor(80, n, n), s).size(), 320 * n);
  }
  VocoderState s = v.initial_state();
  EXPECT_TRUE(v.vocode_chunk(Tensor2D(80, 0), s).empty());
  EXPECT_EQ(s, v.initial_state());
}

TEST(Vocoder, SplitCallsMatchBatch) {
  const ModelConfig c = ModelConfig::tiny();
  const Vocoder v = make_vocoder(c, init_weights(c, 3));
  const Tensor2D mel = noise_tensor(80, 8, 4);
  VocoderState whole_state = v.initial_state();
  const std::vector<float> whole = v.vocode_chunk(mel, whole_state);
  for (std::size_t cut = 1; cut < 8; ++cut) {
    VocoderState st = v.initial_state();
    std::vector<float> out = v.vocode_chunk(mel.slice_frames(0, cut), st);
    const std::vector<float> rest = v.vocode_chunk(mel.slice_frames(cut, 8), st);
    out.insert(out.end(), rest.begin(), rest.end());
    ASSERT_EQ(out, whole) << "cut " << cut;
    ASSERT_EQ(st, whole_state);
  }
  VocoderState st = v.initial_state();
  std::vector<float> framewise;
  for (std::size_t t = 0; t < 8; ++t) {
    const auto piece = v.vocode_chunk(mel.slice_frames(t, t + 1), st);
    framewise.insert(framewise.end(), piece.begin(), piece.end());
  }
  EXPECT_EQ(framewise, whole);
}

TEST(Vocoder, PerturbingLaterFrameLeavesPrefix) {
  const ModelConfig c = ModelConfig::tiny();
  const Vocoder v = make_vocoder(c, init_weights(c, 5));
  const Tensor2D a = noise_tensor(80, 4, 6);
  Tensor2D b = a;
  for (std::size_t ch = 0; ch < 80; ++ch) b.at(ch, 3) += 1.5f;
  VocoderState sa = v.initial_state(), sb = v.initial_state();
  const auto ya = v.vocode_chunk(a, sa), yb = v.vocode_chunk(b, sb);
  for (std::size_t i = 0; i < 960; ++i) ASSERT_EQ(ya[i], yb[i]) << i;
  bool moved = false;
  for (std::size_t i = 960; i < 1280; ++i) moved = moved || ya[i] != yb[i];
  EXPECT_TRUE(moved);
}

TEST(Vocoder, CausalAtEveryFrame) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const ModelConfig c = ModelConfig::tiny();
    const Model m = Model::build(c, init_weights(c, seed));
    for (std::size_t t = 0; t < 8; ++t) ASSERT_TRUE(vocoder_causal_at(m, 8, t, seed * 10 + t)) << t;
  }
}

TEST(Vocoder, OutputInsideOpenUnitInterval) {
  const ModelConfig c = ModelConfig::tiny();
  const Vocoder v = make_vocoder(c, init_weights(c, 8));
  VocoderState st = v.initial_state();
  for (float s : v.vocode_chunk(noise_tensor(80, 6, 9, 20.0f), st)) {
    ASSERT_GT(s, -1.0f);
    ASSERT_LT(s, 1.0f);
  }
}

TEST(Vocoder, ContextFramesMatchesProbe) {
  // Perturbing frame 0 must reach the first sample of frame context - 1 and
  // leave every sample from frame context onward untouched.
  const ModelConfig c = ModelConfig::tiny();
  const Vocoder v = make_vocoder(c, init_weights(c, 11));
  const std::size_t k = v.context_frames();
  ASSERT_GT(k, 0u);
  const std::size_t T = k + 3, spf = v.samples_per_frame();
  const Tensor2D a = noise_tensor(80, T, 12);
  Tensor2D b = a;
  for (std::size_t ch = 0; ch < 80; ++ch) b.at(ch, 0) += 4.0f;
  VocoderState sa = v.initial_state(), sb = v.initial_state();
  const auto ya = v.vocode_chunk(a, sa), yb = v.vocode_chunk(b, sb);
  for (std::size_t i = k * spf; i < T * spf; ++i) ASSERT_EQ(ya[i], yb[i]) << i;
  bool reached = false;
  for (std::size_t i = (k - 1) * spf; i < k * spf; ++i) reached = reached || ya[i] != yb[i];
  EXPECT_TRUE(reached);
}

TEST(Vocoder, ChannelMismatch) {
  const ModelConfig c = ModelConfig::tiny();
  const Vocoder v = make_vocoder(c, init_weights(c, 1));
  VocoderState st = v.initial_state();
  EXPECT_THROW(v.vocode_chunk(Tensor2D(79, 2), st), ShapeError);
}

TEST(ResidualBlock, ZeroBranchesAreIdentity) {
  const ConvSpec s{4, 4, 3, 2, true};
  const std::vector<float> zw(4 * 4 * 3, 0.0f), zb(4, 0.0f);
  std::vector<ResidualBranch> branches(2);
  for (auto& b : branches) b.units.push_back({Conv1d(s, zw, zb), Conv1d(ConvSpec{4, 4, 3, 1, true}, zw, zb)});
  std::vector<ResidualBranchState> st(2);
  for (std::size_t b = 0; b < 2; ++b) {
    st[b].dilated.push_back(branches[b].units[0].dilated.initial_state());
    st[b].plain.push_back(branches[b].units[0].plain.initial_state());
  }
  const Tensor2D x = noise_tensor(4, 7, 3);
  EXPECT_EQ(residual_block(x, branches, st, 0.1f), x);
  std::vector<ResidualBranchState> none;
  EXPECT_EQ(residual_block(x, {}, none, 0.1f), x);
}

TEST(ResidualBlock, SingleBranchAddsItsOutput) {
  std::mt19937_64 rng(4);
  const Conv1d d = random_conv({3, 3, 3, 2, true}, rng), p = random_conv({3, 3, 3, 1, true}, rng);
  std::vector<ResidualBranch> branches{ResidualBranch{{ResidualUnit{d, p}}}};
  std::vector<ResidualBranchState> st{ResidualBranchState{{d.initial_state()}, {p.initial_state()}}};
  const Tensor2D x = noise_tensor(3, 6, 5);
  const Tensor2D h = p.forward(leaky_relu(d.forward(leaky_relu(x, 0.1f)), 0.1f));
  const Tensor2D y = residual_block(x, branches, st, 0.1f);
  for (std::size_t i = 0; i < x.data().size(); ++i) {
    ASSERT_EQ(y.data()[i], float(double(x.data()[i]) + double(h.data()[i])));
  }
}

TEST(UpsampleStage, FactorOneIsTheConv) {
  std::mt19937_64 rng(6);
  UpsampleStage st;
  st.factor = 1;
  st.up = random_conv({3, 3, 5, 1, true}, rng);
  ConvState s = st.up.initial_state();
  const Tensor2D x = noise_tensor(3, 9, 7);
  EXPECT_EQ(upsample_stage(x, st, s), st.up.forward(x));
}

TEST(UpsampleStage, ShapeLaw) {
  std::mt19937_64 rng(8);
  for (std::size_t r : {1u, 2u, 4u, 5u, 8u}) {
    UpsampleStage st;
    st.factor = r;
    st.up = random_conv({2, 2 * r, 3, 1, true}, rng);
    ConvState s = st.up.initial_state();
    const Tensor2D y = upsample_stage(noise_tensor(2, 5, r), st, s);
    EXPECT_EQ(y.channels(), 2u);
    EXPECT_EQ(y.frames(), 5 * r);
    ConvState s2 = st.up.initial_state();
    EXPECT_THROW(upsample_stage(Tensor2D(3, 5), st, s2), ShapeError);
  }
}
