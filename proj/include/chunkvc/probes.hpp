#pragma once

// Self-checks runnable against any loaded model. Each probe returns a
// verdict plus a short detail string.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "chunkvc/pipeline.hpp"

namespace chunkvc {

struct ProbeResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

inline PcmAudio noise_audio(std::size_t samples, std::uint64_t seed, float amplitude = 0.5f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-amplitude, amplitude);
  PcmAudio a;
  a.samples.resize(samples);
  for (auto& s : a.samples) s = u(rng);
  return a;
}

inline Tensor2D noise_tensor(std::size_t channels, std::size_t frames, std::uint64_t seed, float amplitude = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-amplitude, amplitude);
  Tensor2D t(channels, frames);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// Push sizes cycling through `pattern` (in samples) until `total` is covered.
inline PcmAudio run_partitioned(StreamSession& s, const PcmAudio& source, const std::vector<std::size_t>& pattern) {
  PcmAudio out;
  std::size_t pos = 0, i = 0;
  const std::size_t n = source.samples.size();
  while (pos < n) {
    const std::size_t len = std::min(n - pos, pattern[i++ % pattern.size()]);
    PcmAudio slice;
    slice.samples.assign(source.samples.begin() + std::ptrdiff_t(pos),
                         source.samples.begin() + std::ptrdiff_t(pos + len));
    const PcmAudio part = s.push(slice);
    out.samples.insert(out.samples.end(), part.samples.begin(), part.samples.end());
    pos += len;
  }
  const PcmAudio tail = s.flush();
  out.samples.insert(out.samples.end(), tail.samples.begin(), tail.samples.end());
  return out;
}

struct EquivalenceCheck {
  bool partitions_identical = true;
  double recompute_max_abs = 0.0;
  std::size_t output_samples = 0;
  std::string failure;
};

// Single push + flush against every partition, the pipelined runner, and
// the recompute-with-context path.
inline EquivalenceCheck check_stream_equivalence(const Model& model, const SessionConfig& session,
                                                 const PcmAudio& reference, const PcmAudio& source,
                                                 const std::vector<std::vector<std::size_t>>& partitions,
                                                 bool include_pipelined = true) {
  EquivalenceCheck r;
  StreamSession whole(model, session);
  whole.prepare_reference(reference);
  const PcmAudio single = run_stream(whole, source, std::max<std::size_t>(source.samples.size(), 1));
  r.output_samples = single.samples.size();
  for (const auto& p : partitions) {
    StreamSession s(model, session);
    s.prepare_reference(reference);
    if (run_partitioned(s, source, p).samples != single.samples) {
      r.partitions_identical = false;
      r.failure = "partition starting " + std::to_string(p.front()) + " samples differs";
    }
  }
  if (include_pipelined) {
    StreamSession s(model, session);
    s.prepare_reference(reference);
    if (run_stream(s, source, std::size_t(session.chunk_samples()), true).samples != single.samples) {
      r.partitions_identical = false;
      r.failure = "pipelined runner differs";
    }
  }
  r.recompute_max_abs = max_abs_diff(convert_with_context(model, session, whole.reference(), source).samples,
                                     single.samples);
  return r;
}

// Perturbs conditioning frame t; outputs before t must not move.
inline bool decoder_causal_at(const Model& model, std::size_t frames, std::size_t t, std::uint64_t seed) {
  const auto& dec = model.decoder;
  const Tensor2D x = noise_tensor(std::size_t(dec.conditioning_dim()), frames, seed);
  Tensor2D y = x;
  for (std::size_t c = 0; c < y.channels(); ++c) y.at(c, t) += 3.0f;
  DecoderState s1 = dec.initial_state(), s2 = dec.initial_state();
  PitchTrack p1, p2;
  const Tensor2D m1 = dec.run(x, s1, &p1), m2 = dec.run(y, s2, &p2);
  for (std::size_t f = 0; f < t; ++f) {
    if (p1.log_f0[f] != p2.log_f0[f]) return false;
    for (std::size_t c = 0; c < m1.channels(); ++c) {
      if (m1.at(c, f) != m2.at(c, f)) return false;
    }
  }
  return true;
}

inline bool vocoder_causal_at(const Model& model, std::size_t frames, std::size_t t, std::uint64_t seed) {
  const auto& v = model.vocoder;
  const Tensor2D x = noise_tensor(std::size_t(model.cfg.mel.n_mels), frames, seed);
  Tensor2D y = x;
  for (std::size_t c = 0; c < y.channels(); ++c) y.at(c, t) -= 2.0f;
  VocoderState s1 = v.initial_state(), s2 = v.initial_state();
  const auto a = v.vocode_chunk(x, s1), b = v.vocode_chunk(y, s2);
  const std::size_t cut = t * v.samples_per_frame();
  for (std::size_t i = 0; i < cut; ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

// Labels of every chunk i must be unaffected by a change in chunk j > i + R.
inline bool extractor_lookahead_bounded(const Model& model, const SessionConfig& session, std::size_t chunks,
                                        std::size_t perturbed_chunk, std::uint64_t seed) {
  const ExtractorConfig ecfg = model.cfg.extractor_for(session);
  const std::size_t cf = std::size_t(ecfg.chunk_frames);
  const std::size_t rf = std::size_t(ecfg.right_context_chunks) * cf;
  const std::size_t total = chunks * cf;
  const Tensor2D x = noise_tensor(std::size_t(model.cfg.mel.n_mels), total, seed, 4.0f);
  Tensor2D y = x;
  for (std::size_t f = perturbed_chunk * cf; f < (perturbed_chunk + 1) * cf; ++f) {
    for (std::size_t c = 0; c < y.channels(); ++c) y.at(c, f) = -y.at(c, f) + 1.0f;
  }
  auto run = [&](const Tensor2D& mel) {
    ExtractorState st = new_extractor_state(ecfg);
    std::vector<ContentLabels> out;
    for (std::size_t k = 0; k < chunks; ++k) {
      Tensor2D right(mel.channels(), rf);
      for (std::size_t j = 0; j < rf; ++j) {
        const std::size_t f = (k + 1) * cf + j;
        if (f >= total) break;
        for (std::size_t c = 0; c < mel.channels(); ++c) right.at(c, j) = mel.at(c, f);
      }
      out.push_back(model.extractor.process_chunk(st, mel.slice_frames(k * cf, (k + 1) * cf), right));
    }
    return out;
  };
  const auto a = run(x), b = run(y);
  const std::size_t reach = std::size_t(ecfg.right_context_chunks);
  for (std::size_t i = 0; i + reach < perturbed_chunk; ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

// Checks the exact index permutation of pixel_shuffle and its inverse.
inline bool shuffle_is_permutation(std::size_t channels, std::size_t frames, std::size_t r) {
  Tensor2D x(channels * r, frames);
  for (std::size_t i = 0; i < x.data().size(); ++i) x.data()[i] = float(i);
  const Tensor2D y = pixel_shuffle(x, r);
  if (y.channels() != channels || y.frames() != frames * r) return false;
  std::vector<bool> seen(x.data().size(), false);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t j = 0; j < r; ++j) {
        const float v = y.at(c, t * r + j);
        if (v != x.at(c * r + j, t)) return false;
        const auto idx = std::size_t(v);
        if (seen[idx]) return false;
        seen[idx] = true;
      }
    }
  }
  return pixel_unshuffle(y, r) == x;
}

// Exhaustive nearest-neighbour search in plain double arithmetic.
inline std::size_t brute_force_nearest(const std::vector<float>& z, const Codebook& cb) {
  std::size_t best = 0;
  double best_d = INFINITY;
  for (std::size_t k = 0; k < cb.size(); ++k) {
    double d = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) d += (double(z[i]) - cb.entries[k][i]) * (double(z[i]) - cb.entries[k][i]);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

inline bool quantizer_matches_oracle(Codebook cb, std::size_t draws, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-0.2f, 0.2f);
  std::vector<std::uint64_t> expected_counts = cb.usage_counts;
  for (std::size_t n = 0; n < draws; ++n) {
    std::vector<float> z(cb.dim);
    for (auto& v : z) v = u(rng);
    const std::size_t want = brute_force_nearest(z, cb);
    ++expected_counts[want];
    const Quantized q = quantize(z, cb);
    if (q.index != want || q.code != cb.entries[want]) return false;
  }
  return cb.usage_counts == expected_counts;
}

inline bool latency_identity_holds() {
  const double fast[3] = {2.76, 7.82, 6.29};
  const double full[3] = {5.60, 7.88, 6.21};
  return std::abs(overall_latency(fast, 20, 0) - 36.87) < 1e-9 &&
         std::abs(overall_latency(full, 80, 40) - 139.71) <= 0.05;
}

// The built-in probe set run by `verify`. Input lengths are kept short so
// default-size models finish in seconds.
inline std::vector<ProbeResult> run_probes(const Model& model, std::uint64_t seed = 7) {
  std::vector<ProbeResult> out;
  auto guard = [&out](const std::string& name, auto&& f) {
    try {
      auto [ok, detail] = f();
      out.push_back({name, ok, detail});
    } catch (const std::exception& e) {
      out.push_back({name, false, std::string("exception: ") + e.what()});
    }
  };
  const SessionConfig session = model.cfg.session;
  const std::size_t chunk = std::size_t(session.chunk_samples());

  guard("streaming_equivalence", [&] {
    const PcmAudio ref = noise_audio(16000, seed);
    const PcmAudio src = noise_audio(8 * chunk + 1234, seed + 1);
    const auto r = check_stream_equivalence(model, session, ref, src, {{160}, {chunk}, {97, 1601, 5}});
    const bool ok = r.partitions_identical && r.recompute_max_abs <= 1e-5 && r.output_samples == src.samples.size();
    return std::pair{ok, r.failure.empty() ? "recompute max-abs " + std::to_string(r.recompute_max_abs) : r.failure};
  });
  guard("causality", [&] {
    bool ok = true;
    for (std::size_t t : {1u, 4u, 7u}) {
      ok = ok && decoder_causal_at(model, 8, t, seed + t) && vocoder_causal_at(model, 8, t, seed + t);
    }
    ok = ok && extractor_lookahead_bounded(model, session, 6, 5, seed);
    return std::pair{ok, std::string(ok ? "decoder, vocoder, extractor lookahead" : "earlier output moved")};
  });
  guard("shuffle_permutation", [&] {
    bool ok = true;
    for (std::size_t r : {1u, 2u, 4u, 5u, 8u}) {
      for (std::size_t c = 1; c <= 8; ++c) ok = ok && shuffle_is_permutation(c, 5, r);
    }
    return std::pair{ok, std::string("r in {1,2,4,5,8}")};
  });
  guard("quantizer_oracle", [&] {
    const bool ok = quantizer_matches_oracle(model.style.codebook(), 200, seed);
    return std::pair{ok, std::string("200 draws against exhaustive search")};
  });
  guard("latency_identity", [&] {
    const bool ok = latency_identity_holds();
    return std::pair{ok, std::string("36.87 / 139.69")};
  });
  return out;
}

}  // namespace chunkvc
