// Acceptance harness. Prints one PASS/FAIL line per criterion and exits
// non-zero if any selected criterion fails.
//
//   acceptance                 run all nine
//   acceptance --criterion 4   run one

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "chunkvc/cli.hpp"
#include "support/extractor_oracle.hpp"

using namespace chunkvc;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

struct Stopwatch {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
};

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

// Small random model shape, drawn per seed.
ModelConfig small_config(std::mt19937_64& rng) {
  ModelConfig c = ModelConfig::tiny(rng() % 2 ? Setting::Full : Setting::Fast);
  c.extractor.heads = 1 + int(rng() % 2);
  c.extractor.d_model = c.extractor.heads * (4 + int(rng() % 5));
  c.extractor.layers = 1 + int(rng() % 3);
  c.extractor.memory_slots = int(rng() % 4);
  c.extractor.classes = 4 + int(rng() % 12);
  c.decoder.mel_hidden = 4 + int(rng() % 8);
  c.vocoder.base_channels = 2 + int(rng() % 4);
  return c;
}

oracle::Mat rows(const Tensor2D& t) {
  oracle::Mat m;
  for (std::size_t f = 0; f < t.frames(); ++f) m.push_back(t.column(f));
  return m;
}

Verdict latency_identity() {
  const double fast = overall_latency({2.76, 7.82, 6.29}, 20, 0);
  const double full = overall_latency({5.60, 7.88, 6.21}, 80, 40);
  Verdict v;
  v.pass = std::abs(fast - 36.87) <= 1e-9 && std::abs(full - 139.69) <= 1e-9 && std::abs(full - 139.71) <= 0.05;
  v.detail = "fast " + fmt(fast, 10) + " ms (want 36.87), full " + fmt(full, 10) + " ms (want 139.69, and 139.71 +-0.05)";
  return v;
}

Verdict streaming_equivalence() {
  const Stopwatch sw;
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  std::size_t samples = 0;
  const int models = 20;
  for (int m = 0; m < models; ++m) {
    const ModelConfig cfg = small_config(rng);
    const Model model = Model::build(cfg, init_weights(cfg, rng()));
    const SessionConfig session = cfg.session;
    const std::size_t n = 32000 + rng() % 48001;
    const PcmAudio src = noise_audio(n, rng()), ref = noise_audio(16000, rng());
    std::vector<std::size_t> irregular;
    for (int i = 0; i < 7; ++i) irregular.push_back(1 + rng() % 2500);
    const EquivalenceCheck r = check_stream_equivalence(model, session, ref, src, {{160}, {320}, {1280}, irregular});
    if (!r.partitions_identical || r.output_samples != n || !(r.recompute_max_abs <= 1e-5)) {
      return {false, "model " + std::to_string(m) + ": " +
                         (r.failure.empty() ? "recompute max-abs " + fmt(r.recompute_max_abs) : r.failure)};
    }
    worst = std::max(worst, r.recompute_max_abs);
    samples += n;
  }
  const double secs = sw.seconds();
  Verdict v;
  v.pass = secs < 120.0;
  v.detail = std::to_string(models) + " models, " + fmt(double(samples) / 16000.0, 4) +
             " s of input, partitions 10/20/80 ms + irregular + pipelined bit-identical; recompute max-abs " +
             fmt(worst) + " (<= 1e-5); " + fmt(secs, 3) + " s (< 120 s)";
  return v;
}

Verdict causality() {
  const Stopwatch sw;
  const int seeds = 10;
  for (int seed = 0; seed < seeds; ++seed) {
    for (Setting st : {Setting::Full, Setting::Fast}) {
      const ModelConfig cfg = ModelConfig::tiny(st);
      const Model model = Model::build(cfg, init_weights(cfg, std::uint64_t(seed)));
      for (std::size_t t = 0; t < 16; ++t) {
        if (!decoder_causal_at(model, 16, t, std::uint64_t(seed * 100) + t)) {
          return {false, "decoder/pitch frame " + std::to_string(t) + " seed " + std::to_string(seed)};
        }
      }
      for (std::size_t t = 0; t < 8; ++t) {
        if (!vocoder_causal_at(model, 8, t, std::uint64_t(seed * 100) + t)) {
          return {false, "vocoder frame " + std::to_string(t) + " seed " + std::to_string(seed)};
        }
      }
      for (std::size_t j = 1; j < 7; ++j) {
        if (!extractor_lookahead_bounded(model, cfg.session, 7, j, std::uint64_t(seed) + j)) {
          return {false, "extractor chunk " + std::to_string(j) + " seed " + std::to_string(seed)};
        }
      }
    }
  }
  const double secs = sw.seconds();
  return {secs < 60.0, std::to_string(seeds) + " seeds x 2 settings: pitch+mel 16 frames, vocoder 8 frames, extractor R-bounded; " +
                           fmt(secs, 3) + " s (< 60 s)"};
}

Verdict shuffle_and_length() {
  std::size_t cases = 0;
  for (std::size_t r : {1u, 2u, 4u, 5u, 8u}) {
    for (std::size_t c = 1; c <= 32; ++c) {
      for (std::size_t f = 1; f <= 16; ++f, ++cases) {
        if (!shuffle_is_permutation(c, f, r)) {
          return {false, "shuffle c=" + std::to_string(c) + " T=" + std::to_string(f) + " r=" + std::to_string(r)};
        }
      }
    }
  }
  const ModelConfig cfg = ModelConfig::tiny();
  const Model model = Model::build(cfg, init_weights(cfg, 4));
  for (std::size_t f = 1; f <= 16; ++f) {
    VocoderState st = model.vocoder.initial_state();
    const std::size_t n = model.vocoder.vocode_chunk(noise_tensor(80, f, f), st).size();
    if (n != 320 * f) return {false, std::to_string(f) + " frames gave " + std::to_string(n) + " samples"};
  }
  return {true, std::to_string(cases) + " shuffle cases permutation+inverse; vocoder 320 x T for T = 1..16"};
}

Verdict quantizer_and_losses() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  auto vec = [&](std::size_t d) {
    std::vector<float> v(d);
    for (auto& x : v) x = u(rng);
    return v;
  };
  for (int draw = 0; draw < 1000; ++draw) {
    Codebook cb;
    cb.dim = 1 + rng() % 16;
    for (std::size_t k = 0; k < 2 + rng() % 63; ++k) cb.entries.push_back(vec(cb.dim));
    cb.usage_counts.assign(cb.entries.size(), 0);
    const std::vector<float> z = vec(cb.dim);
    const std::size_t want = brute_force_nearest(z, cb);
    const Quantized q = quantize(z, cb);
    if (q.index != want || q.code != cb.entries[want] || cb.usage_counts[want] != 1) {
      return {false, "draw " + std::to_string(draw) + ": index " + std::to_string(q.index) + " != " + std::to_string(want)};
    }
  }
  for (int i = 0; i < 1000; ++i) {
    const std::vector<float> z = vec(8);
    std::vector<float> e = z;
    if (cvq_loss(z, e, 0.25) != 0.0) return {false, "cvq_loss(z, z) != 0"};
    e[rng() % 8] += 1e-3f;
    if (!(cvq_loss(z, e, 0.25) > 0.0)) return {false, "cvq_loss zero for z != e"};
  }
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto e = vec(6), pos = vec(6);
    std::vector<std::vector<float>> negs;
    for (std::size_t n = 0; n < 1 + rng() % 8; ++n) negs.push_back(vec(6));
    double s = 0.0;
    for (const auto& n : negs) s += std::exp(cosine_similarity(e, n) - cosine_similarity(e, pos));
    worst = std::max(worst, std::abs(contrastive_loss(e, pos, negs) - std::log1p(s)));
  }
  const std::vector<float> e{0.3f, -1.2f, 2.0f}, a{1.0f, 0.5f, -0.25f};
  const double sym = contrastive_loss(e, a, {a});
  const bool ok = worst <= 1e-6 && std::abs(sym - std::log(2.0)) <= 1e-12;
  return {ok, "1000 draws match exhaustive search; cvq zero iff z = e; contrastive vs log1p form max " + fmt(worst) +
                  " (<= 1e-6); symmetric N=1 " + fmt(sym, 15) + " (ln 2)"};
}

Verdict conservation() {
  const fs::path dir = fs::temp_directory_path() / "chunkvc_acceptance_6";
  fs::create_directories(dir);
  std::mt19937_64 rng(6);
  bool ok = true;
  std::string detail;
  const ModelConfig cfg = ModelConfig::tiny(Setting::Full);
  save_model(cfg, init_weights(cfg, 6), (dir / "m.cnvc").string());
  write_wav(noise_audio(16000, 1), (dir / "ref.wav").string());
  std::streambuf* saved = std::cout.rdbuf();
  std::ostringstream sink;
  for (int i = 0; i < 50 && ok; ++i) {
    const std::size_t n = 1 + rng() % 64000;
    const std::string setting = i % 2 ? "fast" : "full";
    write_wav(noise_audio(n, rng()), (dir / "src.wav").string());
    std::cout.rdbuf(sink.rdbuf());
    const int rc = cmd_convert((dir / "m.cnvc").string(), (dir / "src.wav").string(), (dir / "ref.wav").string(),
                               (dir / "out.wav").string(), setting, std::nullopt, "", i % 5 == 0);
    std::cout.rdbuf(saved);
    const std::size_t got = rc == 0 ? load_wav((dir / "out.wav").string()).samples.size() : 0;
    if (rc != 0 || got != n) {
      ok = false;
      detail = "length " + std::to_string(n) + " (" + setting + ") gave " + std::to_string(got) + " samples";
    }
  }
  fs::remove_all(dir);
  return {ok, ok ? "50 random lengths through convert, both settings: output samples == input samples" : detail};
}

Verdict recurrence_oracle() {
  std::mt19937_64 rng(7);
  const int seeds = 12;
  for (int s = 0; s < seeds; ++s) {
    ModelConfig cfg = small_config(rng);
    const ModelWeights w = init_weights(cfg, rng());
    const Model model = Model::build(cfg, w);
    const ExtractorConfig e = cfg.extractor_for(cfg.session);
    const std::size_t cf = std::size_t(e.chunk_frames), rf = std::size_t(e.right_context_chunks) * cf;
    const Tensor2D mel = noise_tensor(80, 4 * cf, rng(), 3.0f);
    const oracle::Result expect = oracle::run(cfg, e, w, rows(mel));
    ExtractorState st = new_extractor_state(e);
    for (std::size_t k = 0; k < 4; ++k) {
      Tensor2D right(80, rf);
      for (std::size_t j = 0; j < rf; ++j) {
        const std::size_t f = (k + 1) * cf + j;
        if (f < mel.frames()) {
          for (std::size_t c = 0; c < 80; ++c) right.at(c, j) = mel.at(c, f);
        }
      }
      Tensor2D top;
      const ContentLabels labels = model.extractor.process_chunk(st, mel.slice_frames(k * cf, (k + 1) * cf), right, &top);
      if (labels != expect.labels[k] || rows(top) != expect.top[k]) {
        return {false, "seed " + std::to_string(s) + " chunk " + std::to_string(k) + " differs from re-execution"};
      }
    }
  }
  return {true, std::to_string(seeds) + " seeds x 4 chunks: labels and top-layer rows bit-identical to from-scratch recurrence"};
}

Verdict rtf_sanity() {
  const ModelConfig cfg = ModelConfig::fast();
  const Model model = Model::build(cfg, init_weights(cfg, 8));
  StreamSession s(model, SessionConfig::fast());
  s.prepare_reference(noise_audio(16000, 8));
  const PcmAudio src = noise_audio(5 * 16000, 9);
  run_stream(s, src, std::size_t(s.config().chunk_samples()));
  const LatencyReport r = s.latency_report();
  return {r.overall_rtf < 1.0, "default dims, fast setting, 5 s: overall_rtf " + fmt(r.overall_rtf, 4) + " (content " +
                                   fmt(r.content_rtf, 3) + ", main " + fmt(r.main_rtf, 3) + ", vocoder " +
                                   fmt(r.vocoder_rtf, 3) + "), want < 1.0; overall latency " +
                                   fmt(r.overall_ms, 5) + " ms"};
}

Verdict model_io() {
  std::mt19937_64 rng(9);
  const fs::path path = fs::temp_directory_path() / "chunkvc_acceptance_9.cnvc";
  for (int i = 0; i < 100; ++i) {
    ModelConfig cfg = small_config(rng);
    cfg.style.beta = 0.125 * double(rng() % 5);
    const ModelWeights w = init_weights(cfg, rng());
    const std::string bytes = serialize_model(cfg, w);
    save_model(cfg, w, path.string());
    const auto [c2, w2] = load_model(path.string());
    if (!(w2 == w) || config_to_text(c2) != config_to_text(cfg) || serialize_model(c2, w2) != bytes) {
      fs::remove(path);
      return {false, "round trip " + std::to_string(i) + " not bit-exact"};
    }
    if (Model::build(cfg, w).consumed_weights != w.names()) return {false, "name audit failed for round trip " + std::to_string(i)};
  }
  fs::remove(path);
  for (const ModelConfig& cfg : {ModelConfig::full(), ModelConfig::fast()}) {
    const ModelWeights w = init_weights(cfg, 1);
    if (Model::build(cfg, w).consumed_weights != w.names()) return {false, "name audit failed for default config"};
  }
  return {true, "100 save/load round trips bit-exact; consumed names == container names (random + default configs)"};
}

struct Criterion {
  const char* name;
  std::function<Verdict()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  int only = 0;
  app.add_option("--criterion", only, "Run a single criterion (1-9)")->check(CLI::Range(1, 9));
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria = {
      {"latency identity", latency_identity},
      {"streaming equals offline", streaming_equivalence},
      {"causality probes", causality},
      {"pixel shuffle and vocoder length", shuffle_and_length},
      {"quantizer oracle and losses", quantizer_and_losses},
      {"sample conservation", conservation},
      {"attention recurrence oracle", recurrence_oracle},
      {"RTF sanity", rtf_sanity},
      {"model I/O", model_io},
  };

  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && std::size_t(only) != i + 1) continue;
    Verdict v;
    try {
      v = criteria[i].run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (v.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].name << ": " << v.detail << std::endl;
    all = all && v.pass;
  }
  return all ? 0 : 1;
}
