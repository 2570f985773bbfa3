#pragma once

// Streaming session: reference pre-pass, chunkwise push/flush, latency
// accounting, a recompute-with-context reference path, and a pipelined
// three-thread runner.

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "chunkvc/acoustic_decoder.hpp"
#include "chunkvc/config.hpp"
#include "chunkvc/content_extractor.hpp"
#include "chunkvc/dsp.hpp"
#include "chunkvc/style_encoder.hpp"
#include "chunkvc/tensor.hpp"
#include "chunkvc/vocoder.hpp"
#include "chunkvc/weights.hpp"

namespace chunkvc {

// All modules bound to one set of immutable weights.
struct Model {
  ModelConfig cfg;
  ContentExtractor extractor;
  StyleEncoder style;
  AcousticDecoder decoder;
  Vocoder vocoder;
  std::set<std::string> consumed_weights;

  static Model build(const ModelConfig& cfg, const ModelWeights& weights) {
    const auto violations = validate_config(cfg);
    if (!violations.empty()) throw ConfigError("model: " + violations.front());
    check_weights(cfg, weights);
    WeightReader r(weights);
    Model m{cfg, ContentExtractor(cfg, r), StyleEncoder(cfg, r), AcousticDecoder(cfg, r),
            Vocoder(cfg, r), {}};
    m.consumed_weights = r.used();
    return m;
  }
};

// 1 + sum (kernel - 1) * dilation over a stack.
inline std::size_t receptive_field(std::span<const ConvSpec> stack) {
  if (stack.empty()) throw Error("receptive_field: empty stack");
  std::size_t rf = 1;
  for (const auto& s : stack) rf += s.history();
  return rf;
}

inline double overall_latency(const double (&stage_delays_ms)[3], double chunk_ms, double right_context_ms) {
  for (double d : stage_delays_ms) {
    if (d < 0.0) throw Error("overall_latency: negative stage delay");
  }
  if (chunk_ms < 0.0 || right_context_ms < 0.0) throw Error("overall_latency: negative duration");
  return stage_delays_ms[0] + stage_delays_ms[1] + stage_delays_ms[2] + chunk_ms + right_context_ms;
}

struct LatencyReport {
  double content_rtf = 0, main_rtf = 0, vocoder_rtf = 0;
  double content_ms = 0, main_ms = 0, vocoder_ms = 0;
  double chunk_ms = 0, right_context_ms = 0;
  double overall_ms = 0, overall_rtf = 0;
  double audio_ms = 0;  // audio duration behind each stage's RTF

  std::string to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "content_rtf = " << content_rtf << '\n'
       << "main_rtf = " << main_rtf << '\n'
       << "vocoder_rtf = " << vocoder_rtf << '\n'
       << "content_ms = " << content_ms << '\n'
       << "main_ms = " << main_ms << '\n'
       << "vocoder_ms = " << vocoder_ms << '\n'
       << "chunk_ms = " << chunk_ms << '\n'
       << "right_context_ms = " << right_context_ms << '\n'
       << "overall_ms = " << overall_ms << '\n'
       << "overall_rtf = " << overall_rtf << '\n';
    return os.str();
  }

  static LatencyReport from_text(const std::string& text) {
    std::map<std::string, double> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      kv[detail::trim(line.substr(0, eq))] = std::stod(detail::trim(line.substr(eq + 1)));
    }
    auto get = [&kv](const char* k) {
      auto it = kv.find(k);
      if (it == kv.end()) throw Error(std::string("latency report: missing key ") + k);
      return it->second;
    };
    LatencyReport r;
    r.content_rtf = get("content_rtf");
    r.main_rtf = get("main_rtf");
    r.vocoder_rtf = get("vocoder_rtf");
    r.content_ms = get("content_ms");
    r.main_ms = get("main_ms");
    r.vocoder_ms = get("vocoder_ms");
    r.chunk_ms = get("chunk_ms");
    r.right_context_ms = get("right_context_ms");
    r.overall_ms = get("overall_ms");
    r.overall_rtf = get("overall_rtf");
    return r;
  }
};

struct StageTimer {
  double seconds = 0.0;
  std::size_t frames = 0;

  template <typename F>
  auto time(F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    } else {
      auto r = f();
      seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      return r;
    }
  }
};

struct ReferenceContext {
  TimbreEmbedding timbre;
  StyleTokens tokens;
  AlignmentKeys keys;
};

inline ReferenceContext build_reference(const Model& model, const PcmAudio& ref) {
  if (ref.sample_rate != model.cfg.mel.sample_rate) throw Error("reference: sample rate must be 16000 Hz");
  const std::size_t min_samples =
      2 * std::size_t(model.cfg.style.token_pool_frames) * std::size_t(model.cfg.mel.hop);
  if (ref.samples.size() < min_samples) {
    throw Error("reference too short: " + std::to_string(ref.samples.size()) + " samples, need " +
                std::to_string(min_samples));
  }
  const MelExtractor mel(model.cfg.mel);
  const Tensor2D m = mel(ref);
  ReferenceContext ctx;
  ctx.timbre = model.style.encode_timbre(m);
  ctx.tokens = model.style.encode_style_tokens(m);
  ctx.keys = model.style.alignment_keys(ctx.tokens);
  return ctx;
}

struct LabelChunk {
  ContentLabels labels;
  std::size_t first_frame = 0;
};

// Sample buffering, causal mel framing and the content extractor.
class ContentStage {
 public:
  ContentStage(const Model& model, const SessionConfig& session)
      : model_(&model),
        ecfg_(model.cfg.extractor_for(session)),
        mel_(model.cfg.mel),
        state_(new_extractor_state(ecfg_)) {}

  std::size_t chunk_frames() const { return std::size_t(ecfg_.chunk_frames); }
  std::size_t right_frames() const { return std::size_t(ecfg_.right_context_chunks * ecfg_.chunk_frames); }
  std::size_t total_samples() const { return total_samples_; }
  bool finished() const { return finished_; }
  const StageTimer& timer() const { return timer_; }

  std::vector<LabelChunk> push(std::span<const float> samples) {
    if (finished_) throw StateError("session: push after flush");
    return timer_.time([&] {
      buffer_.insert(buffer_.end(), samples.begin(), samples.end());
      total_samples_ += samples.size();
      compute_frames(total_samples_ / std::size_t(model_->cfg.mel.hop));
      std::vector<LabelChunk> out;
      while (frames_.size() >= chunk_frames() + right_frames()) out.push_back(run_chunk(chunk_frames()));
      return out;
    });
  }

  // Zero-pads to a whole frame, then drains every remaining frame.
  std::vector<LabelChunk> flush() {
    if (finished_) return {};
    return timer_.time([&] {
      const std::size_t hop = std::size_t(model_->cfg.mel.hop);
      compute_frames((total_samples_ + hop - 1) / hop);
      std::vector<LabelChunk> out;
      while (frames_.size() >= chunk_frames()) out.push_back(run_chunk(chunk_frames()));
      const std::size_t first = next_frame_;
      ContentLabels tail = model_->extractor.flush(state_, take(frames_.size()));
      next_frame_ += tail.size();
      timer_.frames += tail.size();
      if (!tail.empty()) out.push_back({std::move(tail), first});
      finished_ = true;
      return out;
    });
  }

 private:
  void compute_frames(std::size_t target) {
    const auto& mc = model_->cfg.mel;
    if (target <= frames_computed_) return;
    Tensor2D f = mel_.frames(buffer_, buffer_offset_, frames_computed_, target);
    for (std::size_t t = 0; t < f.frames(); ++t) frames_.push_back(f.column(t));
    frames_computed_ = target;
    // Keep only the samples the next frame's window can still reach.
    const std::size_t next_start =
        (frames_computed_ + 1) * std::size_t(mc.hop) > std::size_t(mc.win)
            ? (frames_computed_ + 1) * std::size_t(mc.hop) - std::size_t(mc.win)
            : 0;
    if (next_start > buffer_offset_ + 4 * std::size_t(mc.win)) {
      buffer_.erase(buffer_.begin(), buffer_.begin() + std::ptrdiff_t(next_start - buffer_offset_));
      buffer_offset_ = next_start;
    }
  }

  Tensor2D columns(std::size_t begin, std::size_t count) const {
    Tensor2D t(std::size_t(model_->cfg.mel.n_mels), count);
    for (std::size_t j = 0; j < count; ++j) {
      if (begin + j >= frames_.size()) continue;  // zero padding past the end
      const auto& col = frames_[begin + j];
      for (std::size_t c = 0; c < col.size(); ++c) t.at(c, j) = col[c];
    }
    return t;
  }

  Tensor2D take(std::size_t n) {
    Tensor2D t = columns(0, n);
    frames_.erase(frames_.begin(), frames_.begin() + std::ptrdiff_t(n));
    return t;
  }

  LabelChunk run_chunk(std::size_t n) {
    const Tensor2D right = columns(n, right_frames());
    const Tensor2D chunk = take(n);
    LabelChunk lc{model_->extractor.process_chunk(state_, chunk, right), next_frame_};
    next_frame_ += n;
    timer_.frames += n;
    return lc;
  }

  const Model* model_;
  ExtractorConfig ecfg_;
  MelExtractor mel_;
  ExtractorState state_;
  std::vector<float> buffer_;
  std::size_t buffer_offset_ = 0;
  std::size_t total_samples_ = 0;
  std::size_t frames_computed_ = 0;
  std::deque<std::vector<float>> frames_;  // computed, not yet consumed as chunk frames
  std::size_t next_frame_ = 0;
  bool finished_ = false;
  StageTimer timer_;
};

// content ∥ timbre ∥ style for each frame of a label chunk.
inline Tensor2D conditioning_features(const Model& model, const ReferenceContext& ref, const ContentLabels& labels) {
  const Tensor2D content = model.decoder.embed_labels(labels);
  const Tensor2D style = model.style.align_style(content, ref.timbre, ref.keys);
  const Tensor2D timbre = broadcast_frames(ref.timbre, labels.size());
  return concat_channels({&content, &timbre, &style});
}

// Style alignment, pitch prediction and mel decoding.
class MainStage {
 public:
  MainStage(const Model& model, const ReferenceContext& ref)
      : model_(&model), ref_(&ref), state_(model.decoder.initial_state()) {}

  Tensor2D process(const LabelChunk& chunk) {
    return timer_.time([&] {
      timer_.frames += chunk.labels.size();
      return model_->decoder.run(conditioning_features(*model_, *ref_, chunk.labels), state_);
    });
  }
  const StageTimer& timer() const { return timer_; }

 private:
  const Model* model_;
  const ReferenceContext* ref_;
  DecoderState state_;
  StageTimer timer_;
};

class VocoderStage {
 public:
  explicit VocoderStage(const Model& model) : model_(&model), state_(model.vocoder.initial_state()) {}

  std::vector<float> process(const Tensor2D& mel) {
    return timer_.time([&] {
      timer_.frames += mel.frames();
      return model_->vocoder.vocode_chunk(mel, state_);
    });
  }
  const StageTimer& timer() const { return timer_; }

 private:
  const Model* model_;
  VocoderState state_;
  StageTimer timer_;
};

class StreamSession {
 public:
  StreamSession(const Model& model, const SessionConfig& session) : model_(&model), session_(session) {
    const auto v = validate_session(session);
    if (!v.empty()) throw ConfigError(v.front());
    reset_stages();
  }

  const SessionConfig& config() const { return session_; }
  const Model& model() const { return *model_; }
  bool has_reference() const { return reference_.has_value(); }
  const ReferenceContext& reference() const { return reference_.value(); }

  // Replaces the reference and restarts the stream state.
  const ReferenceContext& prepare_reference(const PcmAudio& ref) {
    reference_ = build_reference(*model_, ref);
    reset_stages();
    return *reference_;
  }

  PcmAudio push(const PcmAudio& samples) {
    require_ready();
    if (samples.sample_rate != model_->cfg.mel.sample_rate) throw Error("push: input must be 16000 Hz");
    PcmAudio out;
    for (const LabelChunk& lc : content_->push(samples.samples)) append(out, render(lc));
    return out;
  }

  PcmAudio flush() {
    if (!reference_) return {};
    PcmAudio out;
    for (const LabelChunk& lc : content_->flush()) append(out, render(lc));
    return out;
  }

  std::size_t input_samples() const { return content_->total_samples(); }
  std::size_t output_samples() const { return emitted_; }

  LatencyReport latency_report() const {
    return make_report(content_->timer(), main_->timer(), vocoder_->timer());
  }

  LatencyReport make_report(const StageTimer& content, const StageTimer& main, const StageTimer& vocoder) const {
    if (content.frames == 0) throw Error("latency_report: no chunks processed");
    const double frame_ms = model_->cfg.mel.frame_ms();
    LatencyReport r;
    r.audio_ms = double(content.frames) * frame_ms;
    r.content_rtf = content.seconds * 1000.0 / r.audio_ms;
    r.main_rtf = main.seconds * 1000.0 / (double(main.frames) * frame_ms);
    r.vocoder_rtf = vocoder.seconds * 1000.0 / (double(vocoder.frames) * frame_ms);
    r.chunk_ms = session_.chunk_ms;
    r.right_context_ms = session_.right_context_ms();
    r.content_ms = r.content_rtf * r.chunk_ms;
    r.main_ms = r.main_rtf * r.chunk_ms;
    r.vocoder_ms = r.vocoder_rtf * r.chunk_ms;
    const double delays[3] = {r.content_ms, r.main_ms, r.vocoder_ms};
    r.overall_ms = overall_latency(delays, r.chunk_ms, r.right_context_ms);
    r.overall_rtf = r.content_rtf + r.main_rtf + r.vocoder_rtf;
    return r;
  }

  // Stage access for the pipelined runner.
  ContentStage& content_stage() { return *content_; }
  MainStage& main_stage() { return *main_; }
  VocoderStage& vocoder_stage() { return *vocoder_; }

  // Clips the final chunk so total output never exceeds total input.
  void append(PcmAudio& out, const std::vector<float>& samples) {
    const std::size_t limit = content_->total_samples();
    const std::size_t room = limit > emitted_ ? limit - emitted_ : 0;
    const std::size_t n = std::min(room, samples.size());
    out.samples.insert(out.samples.end(), samples.begin(), samples.begin() + std::ptrdiff_t(n));
    emitted_ += n;
  }

 private:
  void require_ready() const {
    if (!reference_) throw StateError("push: prepare_reference must be called first");
  }

  std::vector<float> render(const LabelChunk& lc) { return vocoder_->process(main_->process(lc)); }

  void reset_stages() {
    content_.emplace(*model_, session_);
    if (reference_) main_.emplace(*model_, *reference_);
    vocoder_.emplace(*model_);
    emitted_ = 0;
  }

  const Model* model_;
  SessionConfig session_;
  std::optional<ReferenceContext> reference_;
  std::optional<ContentStage> content_;
  std::optional<MainStage> main_;
  std::optional<VocoderStage> vocoder_;
  std::size_t emitted_ = 0;
};

// ---------------------------------------------------------------------------
// Bounded single-producer/single-consumer queue for the pipelined runner.

template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

  void push(T v) {
    std::unique_lock<std::mutex> lock(m_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
    if (closed_) return;
    items_.push_back(std::move(v));
    not_empty_.notify_one();
  }

  // Empty optional once closed and drained.
  std::optional<T> pop() {
    std::unique_lock<std::mutex> lock(m_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T v = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return v;
  }

  void close() {
    std::lock_guard<std::mutex> lock(m_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::deque<T> items_;
  bool closed_ = false;
  std::mutex m_;
  std::condition_variable not_empty_, not_full_;
};

// Feeds `source` in slices of `push_samples` and flushes. With `pipelined`
// the three stages run on their own threads over successive chunks.
inline PcmAudio run_stream(StreamSession& session, const PcmAudio& source, std::size_t push_samples,
                           bool pipelined = false) {
  if (push_samples == 0) throw Error("run_stream: push size must be >= 1");
  const std::size_t n = source.samples.size();
  if (!pipelined) {
    PcmAudio out;
    for (std::size_t pos = 0; pos < n; pos += push_samples) {
      PcmAudio slice;
      slice.samples.assign(source.samples.begin() + std::ptrdiff_t(pos),
                           source.samples.begin() + std::ptrdiff_t(std::min(n, pos + push_samples)));
      PcmAudio part = session.push(slice);
      out.samples.insert(out.samples.end(), part.samples.begin(), part.samples.end());
    }
    PcmAudio tail = session.flush();
    out.samples.insert(out.samples.end(), tail.samples.begin(), tail.samples.end());
    return out;
  }

  if (!session.has_reference()) throw StateError("run_stream: prepare_reference must be called first");
  if (source.sample_rate != session.model().cfg.mel.sample_rate) throw Error("run_stream: input must be 16000 Hz");
  BoundedQueue<LabelChunk> labels(4);
  BoundedQueue<Tensor2D> mels(4);
  BoundedQueue<std::vector<float>> audio(4);
  std::exception_ptr error;
  std::mutex error_mutex;
  auto fail = [&](std::exception_ptr e) {
    std::lock_guard<std::mutex> lock(error_mutex);
    if (!error) error = e;
    labels.close();
    mels.close();
    audio.close();
  };

  std::thread content([&] {
    try {
      ContentStage& st = session.content_stage();
      for (std::size_t pos = 0; pos < n; pos += push_samples) {
        const std::size_t end = std::min(n, pos + push_samples);
        for (auto& lc : st.push(std::span<const float>(source.samples).subspan(pos, end - pos))) {
          labels.push(std::move(lc));
        }
      }
      for (auto& lc : st.flush()) labels.push(std::move(lc));
      labels.close();
    } catch (...) {
      fail(std::current_exception());
    }
  });
  std::thread main([&] {
    try {
      while (auto lc = labels.pop()) mels.push(session.main_stage().process(*lc));
      mels.close();
    } catch (...) {
      fail(std::current_exception());
    }
  });
  std::thread vocoder([&] {
    try {
      while (auto m = mels.pop()) audio.push(session.vocoder_stage().process(*m));
      audio.close();
    } catch (...) {
      fail(std::current_exception());
    }
  });

  std::vector<std::vector<float>> parts;
  while (auto a = audio.pop()) parts.push_back(std::move(*a));
  content.join();
  main.join();
  vocoder.join();
  if (error) std::rethrow_exception(error);
  PcmAudio out;
  for (const auto& p : parts) session.append(out, p);
  return out;
}

// ---------------------------------------------------------------------------
// Reference path: every chunk's decoder and vocoder output is recomputed
// from a zero state over a window reaching back one receptive field, and
// only the chunk's own segment is kept.

struct ContextWindows {
  std::size_t decoder_frames;  // history the pitch + mel stacks can see
  std::size_t vocoder_frames;
};

inline ContextWindows context_windows(const Model& model) {
  const auto pitch = model.decoder.pitch_specs();
  const auto mel = model.decoder.mel_specs();
  return {receptive_field(pitch) - 1 + receptive_field(mel) - 1, model.vocoder.context_frames()};
}

inline PcmAudio convert_with_context(const Model& model, const SessionConfig& session,
                                     const ReferenceContext& ref, const PcmAudio& source) {
  // Labels come from the chunk-incremental extractor, which is itself the
  // recurrence; it has no finite receptive field to window over.
  ContentStage content(model, session);
  std::vector<LabelChunk> chunks = content.push(source.samples);
  for (auto& lc : content.flush()) chunks.push_back(std::move(lc));

  ContentLabels all_labels;
  for (const auto& lc : chunks) all_labels.insert(all_labels.end(), lc.labels.begin(), lc.labels.end());
  if (all_labels.empty()) return {};
  const Tensor2D cond = conditioning_features(model, ref, all_labels);

  const ContextWindows ctx = context_windows(model);
  const std::size_t hop = std::size_t(model.cfg.mel.hop);
  PcmAudio out;
  for (const auto& lc : chunks) {
    const std::size_t s = lc.first_frame;
    const std::size_t e = s + lc.labels.size();
    const std::size_t vs = s > ctx.vocoder_frames ? s - ctx.vocoder_frames : 0;
    const std::size_t ds = vs > ctx.decoder_frames ? vs - ctx.decoder_frames : 0;
    DecoderState dstate = model.decoder.initial_state();
    const Tensor2D mel = model.decoder.run(cond.slice_frames(ds, e), dstate);
    VocoderState vstate = model.vocoder.initial_state();
    const std::vector<float> wave = model.vocoder.vocode_chunk(mel.slice_frames(vs - ds, e - ds), vstate);
    out.samples.insert(out.samples.end(), wave.end() - std::ptrdiff_t((e - s) * hop), wave.end());
  }
  out.samples.resize(std::min(out.samples.size(), source.samples.size()));
  return out;
}

}  // namespace chunkvc
