#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <random>

#include "chunkvc/probes.hpp"

using namespace chunkvc;

namespace {

struct Rig {
  ModelConfig cfg;
  Model model;
  SessionConfig session;
  PcmAudio reference;

  explicit Rig(Setting s, std::uint64_t seed = 1)
      : cfg(ModelConfig::tiny(s)),
        model(Model::build(cfg, init_weights(cfg, seed))),
        session(SessionConfig::for_setting(s)),
        reference(noise_audio(16000, seed + 100)) {}

  std::unique_ptr<StreamSession> open() const {
    auto s = std::make_unique<StreamSession>(model, session);
    s->prepare_reference(reference);
    return s;
  }
};

PcmAudio ms(std::size_t millis, std::uint64_t seed) { return noise_audio(millis * 16, seed); }

PcmAudio slice(const PcmAudio& a, std::size_t begin, std::size_t end) {
  PcmAudio out;
  out.samples.assign(a.samples.begin() + std::ptrdiff_t(begin), a.samples.begin() + std::ptrdiff_t(end));
  return out;
}

}  // namespace

TEST(Latency, OverallIdentity) {
  EXPECT_NEAR(overall_latency({2.76, 7.82, 6.29}, 20, 0), 36.87, 1e-9);
  EXPECT_NEAR(overall_latency({5.60, 7.88, 6.21}, 80, 40), 139.69, 1e-9);
  EXPECT_LE(std::abs(overall_latency({5.60, 7.88, 6.21}, 80, 40) - 139.71), 0.05);
  EXPECT_EQ(overall_latency({0, 0, 0}, 20, 0), 20.0);
  EXPECT_THROW(overall_latency({-1, 0, 0}, 20, 0), Error);
  EXPECT_THROW(overall_latency({0, 0, 0}, -20, 0), Error);
  EXPECT_THROW(overall_latency({0, 0, 0}, 20, -1), Error);
}

TEST(Reference, OneSecondGivesThirteenTokens) {
  const Rig rig(Setting::Full);
  const ReferenceContext ctx = build_reference(rig.model, rig.reference);
  EXPECT_EQ(ctx.tokens.size(), 13u);
  EXPECT_EQ(build_reference(rig.model, rig.reference).timbre, ctx.timbre);
}

TEST(Reference, TooShortAndWrongRate) {
  const Rig rig(Setting::Fast);
  EXPECT_THROW(build_reference(rig.model, noise_audio(2559, 1)), Error);
  EXPECT_NO_THROW(build_reference(rig.model, noise_audio(2560, 1)));
  PcmAudio r = noise_audio(16000, 1);
  r.sample_rate = 8000;
  EXPECT_THROW(build_reference(rig.model, r), Error);
}

TEST(Reference, PreparingTwiceReplacesContext) {
  const Rig rig(Setting::Fast);
  const PcmAudio src = ms(300, 2);
  auto a = rig.open();
  const PcmAudio first = run_stream(*a, src, 320);

  StreamSession b(rig.model, rig.session);
  b.prepare_reference(noise_audio(8000, 77));
  b.push(slice(src, 0, 1000));
  b.prepare_reference(rig.reference);
  EXPECT_EQ(b.output_samples(), 0u);
  EXPECT_EQ(run_stream(b, src, 320), first);
}

TEST(Session, FullSettingGatesOnRightContext) {
  const Rig rig(Setting::Full);
  auto s = rig.open();
  const PcmAudio src = ms(240, 3);
  EXPECT_TRUE(s->push(slice(src, 0, 1280)).samples.empty());
  const PcmAudio out = s->push(slice(src, 1280, 3840));
  EXPECT_EQ(out.samples.size(), 1280u);
  EXPECT_EQ(s->output_samples(), 1280u);
}

TEST(Session, GatingHoldsAtEverySample) {
  const Rig rig(Setting::Full);
  auto s = rig.open();
  const PcmAudio src = ms(800, 4);
  const std::size_t chunk = 1280, right = 2 * 1280;
  for (std::size_t n = 0; n < src.samples.size(); n += 160) {
    s->push(slice(src, n, n + 160));
    const std::size_t have = n + 160;
    const std::size_t ready = have >= right ? (have - right) / chunk * chunk : 0;
    ASSERT_EQ(s->output_samples(), ready) << have;
    ASSERT_LE(s->output_samples(), s->input_samples());
  }
}

TEST(Session, FastSettingEmitsImmediately) {
  const Rig rig(Setting::Fast);
  auto s = rig.open();
  const PcmAudio src = ms(20, 5);
  EXPECT_EQ(s->push(src).samples.size(), 320u);

  auto halves = rig.open();
  PcmAudio two = halves->push(slice(src, 0, 160));
  EXPECT_TRUE(two.samples.empty());
  two = halves->push(slice(src, 160, 320));
  auto once = rig.open();
  EXPECT_EQ(two.samples, once->push(src).samples);
}

TEST(Session, FlushConservesSamples) {
  const Rig rig(Setting::Full);
  auto empty = rig.open();
  EXPECT_TRUE(empty->flush().samples.empty());

  auto s = rig.open();
  EXPECT_TRUE(s->push(ms(100, 6)).samples.empty());
  EXPECT_EQ(s->flush().samples.size(), 1600u);
  EXPECT_TRUE(s->flush().samples.empty());
  EXPECT_EQ(s->output_samples(), 1600u);

  std::mt19937_64 rng(8);
  for (int i = 0; i < 8; ++i) {
    const std::size_t n = 1 + rng() % 20000;
    for (Setting st : {Setting::Full, Setting::Fast}) {
      const Rig r(st, 3);
      auto x = r.open();
      EXPECT_EQ(run_stream(*x, noise_audio(n, n), 1 + rng() % 3000).samples.size(), n);
    }
  }
}

TEST(Session, Errors) {
  const Rig rig(Setting::Fast);
  StreamSession s(rig.model, rig.session);
  EXPECT_THROW(s.push(ms(20, 1)), StateError);
  EXPECT_TRUE(s.flush().samples.empty());
  s.prepare_reference(rig.reference);
  PcmAudio low = ms(20, 1);
  low.sample_rate = 8000;
  EXPECT_THROW(s.push(low), Error);
  s.push(ms(20, 1));
  s.flush();
  EXPECT_THROW(s.push(ms(20, 1)), StateError);

  SessionConfig bad = rig.session;
  bad.chunk_ms = 30;
  EXPECT_THROW(StreamSession(rig.model, bad), ConfigError);
}

TEST(Session, PartitionsAreBitIdentical) {
  for (Setting st : {Setting::Full, Setting::Fast}) {
    const Rig rig(st, 4);
    const PcmAudio src = noise_audio(16000 * 2 + 777, 9);
    const EquivalenceCheck c =
        check_stream_equivalence(rig.model, rig.session, rig.reference, src, {{160}, {320}, {1280}, {1, 999, 4000, 37}});
    EXPECT_TRUE(c.partitions_identical) << c.failure;
    EXPECT_EQ(c.output_samples, src.samples.size());
    EXPECT_LE(c.recompute_max_abs, 1e-5);
  }
}

TEST(Session, PipelinedMatchesSequential) {
  const Rig rig(Setting::Full, 6);
  const PcmAudio src = noise_audio(16000 + 123, 10);
  auto a = rig.open();
  auto b = rig.open();
  EXPECT_EQ(run_stream(*a, src, 517, true), run_stream(*b, src, 517, false));
  StreamSession c(rig.model, rig.session);
  EXPECT_THROW(run_stream(c, src, 320, true), StateError);
}

TEST(Session, OutputIsPrefixConsistent) {
  const Rig rig(Setting::Fast, 7);
  const PcmAudio src = noise_audio(16000, 11);
  auto whole = rig.open();
  const PcmAudio full = run_stream(*whole, src, 320);
  auto part = rig.open();
  const PcmAudio prefix = part->push(slice(src, 0, 5000));
  ASSERT_EQ(prefix.samples.size(), 4800u);
  EXPECT_TRUE(std::equal(prefix.samples.begin(), prefix.samples.end(), full.samples.begin()));
}

TEST(Report, IdentityAndAccounting) {
  const Rig rig(Setting::Full, 2);
  const PcmAudio src = noise_audio(16000, 12);
  auto none = rig.open();
  EXPECT_THROW(none->latency_report(), Error);

  auto a = rig.open();
  auto b = rig.open();
  run_stream(*a, src, 1280);
  run_stream(*b, src, 1280);
  const LatencyReport r = a->latency_report(), r2 = b->latency_report();
  const double delays[3] = {r.content_ms, r.main_ms, r.vocoder_ms};
  EXPECT_EQ(r.overall_ms, overall_latency(delays, r.chunk_ms, r.right_context_ms));
  EXPECT_EQ(r.overall_rtf, r.content_rtf + r.main_rtf + r.vocoder_rtf);
  for (double v : {r.content_ms, r.main_ms, r.vocoder_ms, r.content_rtf, r.main_rtf, r.vocoder_rtf}) EXPECT_GE(v, 0.0);
  EXPECT_EQ(r.chunk_ms, 80.0);
  EXPECT_EQ(r.right_context_ms, 160.0);
  EXPECT_EQ(r.audio_ms, 1000.0);
  EXPECT_EQ(r.audio_ms, r2.audio_ms);
}

TEST(Report, TextRoundTrip) {
  const Rig rig(Setting::Fast, 2);
  auto s = rig.open();
  run_stream(*s, noise_audio(8000, 13), 320);
  const LatencyReport r = s->latency_report();
  const std::string text = r.to_text();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 10);
  const LatencyReport back = LatencyReport::from_text(text);
  EXPECT_EQ(back.to_text(), text);
  EXPECT_EQ(back.overall_ms, r.overall_ms);
  EXPECT_THROW(LatencyReport::from_text("content_rtf = 1\n"), Error);
}

TEST(Probes, FreshModelPassesAll) {
  const ModelConfig c = ModelConfig::tiny();
  const Model m = Model::build(c, init_weights(c, 21));
  const auto results = run_probes(m);
  EXPECT_EQ(results.size(), 5u);
  for (const auto& r : results) EXPECT_TRUE(r.pass) << r.name << ": " << r.detail;
}
