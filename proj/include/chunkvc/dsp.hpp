#pragma once

// PCM WAV I/O and causal log-mel analysis.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "chunkvc/config.hpp"
#include "chunkvc/tensor.hpp"

namespace chunkvc {

struct PcmAudio {
  int sample_rate = 16000;
  std::vector<float> samples;

  double duration_ms() const { return 1000.0 * double(samples.size()) / sample_rate; }
  friend bool operator==(const PcmAudio&, const PcmAudio&) = default;
};

enum class WavErrorCode {
  Io,
  NotRiff,
  NotWave,
  MissingFormat,
  MissingData,
  NotPcm,
  WrongBitDepth,
  WrongChannels,
  WrongSampleRate,
  Truncated,
};

inline const char* to_string(WavErrorCode c) {
  switch (c) {
    case WavErrorCode::Io: return "io";
    case WavErrorCode::NotRiff: return "not-riff";
    case WavErrorCode::NotWave: return "not-wave";
    case WavErrorCode::MissingFormat: return "missing-fmt";
    case WavErrorCode::MissingData: return "missing-data";
    case WavErrorCode::NotPcm: return "not-pcm";
    case WavErrorCode::WrongBitDepth: return "wrong-bit-depth";
    case WavErrorCode::WrongChannels: return "wrong-channels";
    case WavErrorCode::WrongSampleRate: return "wrong-sample-rate";
    case WavErrorCode::Truncated: return "truncated";
  }
  return "unknown";
}

class WavError : public Error {
 public:
  WavError(WavErrorCode code, const std::string& what)
      : Error(std::string("wav (") + to_string(code) + "): " + what), code_(code) {}
  WavErrorCode code() const { return code_; }

 private:
  WavErrorCode code_;
};

namespace detail {

inline std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}
inline std::uint16_t le16(const unsigned char* p) {
  return std::uint16_t(p[0] | p[1] << 8);
}
inline void put32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(char((v >> (8 * i)) & 0xff));
}
inline void put16(std::string& s, std::uint16_t v) {
  s.push_back(char(v & 0xff));
  s.push_back(char(v >> 8));
}

}  // namespace detail

inline PcmAudio decode_wav(const std::string& bytes) {
  const auto* b = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  if (n < 12) throw WavError(WavErrorCode::Truncated, "file shorter than RIFF header");
  if (std::memcmp(b, "RIFF", 4) != 0) throw WavError(WavErrorCode::NotRiff, "missing RIFF tag");
  if (std::memcmp(b + 8, "WAVE", 4) != 0) throw WavError(WavErrorCode::NotWave, "missing WAVE tag");

  bool have_fmt = false;
  std::size_t pos = 12;
  while (true) {
    if (pos + 8 > n) {
      throw WavError(have_fmt ? WavErrorCode::MissingData : WavErrorCode::MissingFormat,
                     have_fmt ? "no data chunk" : "no fmt chunk");
    }
    const unsigned char* id = b + pos;
    const std::uint32_t size = detail::le32(b + pos + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (size < 16 || body + 16 > n) throw WavError(WavErrorCode::Truncated, "fmt chunk cut short");
      const std::uint16_t format = detail::le16(b + body);
      const std::uint16_t channels = detail::le16(b + body + 2);
      const std::uint32_t rate = detail::le32(b + body + 4);
      const std::uint16_t bits = detail::le16(b + body + 14);
      if (format != 1) throw WavError(WavErrorCode::NotPcm, "format tag " + std::to_string(format));
      if (bits != 16) throw WavError(WavErrorCode::WrongBitDepth, std::to_string(bits) + "-bit samples");
      if (channels != 1) throw WavError(WavErrorCode::WrongChannels, std::to_string(channels) + " channels");
      if (rate != 16000) throw WavError(WavErrorCode::WrongSampleRate, std::to_string(rate) + " Hz");
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!have_fmt) throw WavError(WavErrorCode::MissingFormat, "data chunk before fmt chunk");
      if (body + size > n || size % 2 != 0) {
        throw WavError(WavErrorCode::Truncated, "data chunk declares " + std::to_string(size) +
                                                    " bytes, file has " + std::to_string(n - body));
      }
      PcmAudio pcm;
      pcm.samples.resize(size / 2);
      for (std::size_t i = 0; i < pcm.samples.size(); ++i) {
        const auto v = std::int16_t(detail::le16(b + body + 2 * i));
        pcm.samples[i] = float(v) / 32768.0f;
      }
      return pcm;
    }
    pos = body + size + (size & 1);
  }
}

inline PcmAudio load_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw WavError(WavErrorCode::Io, "cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_wav(bytes);
}

inline std::int16_t quantize_sample(float x) {
  const float c = std::clamp(std::isfinite(x) ? x : 0.0f, -1.0f, 1.0f);
  return std::int16_t(std::lrint(std::clamp(double(c) * 32768.0, -32768.0, 32767.0)));
}

inline std::string encode_wav(const PcmAudio& pcm) {
  if (pcm.sample_rate != 16000) {
    throw WavError(WavErrorCode::WrongSampleRate, "can only write 16000 Hz audio");
  }
  const std::uint32_t data_bytes = std::uint32_t(pcm.samples.size() * 2);
  std::string s;
  s.reserve(44 + data_bytes);
  s += "RIFF";
  detail::put32(s, 36 + data_bytes);
  s += "WAVEfmt ";
  detail::put32(s, 16);
  detail::put16(s, 1);
  detail::put16(s, 1);
  detail::put32(s, 16000);
  detail::put32(s, 32000);
  detail::put16(s, 2);
  detail::put16(s, 16);
  s += "data";
  detail::put32(s, data_bytes);
  for (float x : pcm.samples) detail::put16(s, std::uint16_t(quantize_sample(x)));
  return s;
}

inline void write_wav(const PcmAudio& pcm, const std::string& path) {
  const std::string bytes = encode_wav(pcm);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw WavError(WavErrorCode::Io, "cannot open " + path + " for writing");
  f.write(bytes.data(), std::streamsize(bytes.size()));
  if (!f) throw WavError(WavErrorCode::Io, "write failed for " + path);
}

// ---------------------------------------------------------------------------
// Mel analysis

inline double hz_to_mel(double hz) {
  // Slaney scale: linear below 1 kHz, logarithmic above.
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  const double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  return hz < min_log_hz ? hz / f_sp : min_log_mel + std::log(hz / min_log_hz) / logstep;
}

inline double mel_to_hz(double mel) {
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  const double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  return mel < min_log_mel ? mel * f_sp : min_log_hz * std::exp(logstep * (mel - min_log_mel));
}

// Triangular filters with unit peak, shape (n_mels, win/2 + 1).
struct MelFilterbank {
  int n_mels = 0;
  int n_bins = 0;
  std::vector<double> centers_hz;
  std::vector<float> weights;

  float weight(int m, int k) const { return weights[std::size_t(m) * n_bins + k]; }

  static MelFilterbank build(const MelConfig& cfg) {
    MelFilterbank fb;
    fb.n_mels = cfg.n_mels;
    fb.n_bins = cfg.win / 2 + 1;
    const double mel_lo = hz_to_mel(cfg.f_min);
    const double mel_hi = hz_to_mel(cfg.f_max);
    std::vector<double> edges(cfg.n_mels + 2);
    for (int i = 0; i < cfg.n_mels + 2; ++i) {
      edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / double(cfg.n_mels + 1));
    }
    fb.centers_hz.assign(edges.begin() + 1, edges.end() - 1);
    fb.weights.assign(std::size_t(fb.n_mels) * fb.n_bins, 0.0f);
    for (int m = 0; m < cfg.n_mels; ++m) {
      const double lo = edges[m], c = edges[m + 1], hi = edges[m + 2];
      for (int k = 0; k < fb.n_bins; ++k) {
        const double f = double(k) * cfg.sample_rate / cfg.win;
        const double w = std::min((f - lo) / (c - lo), (hi - f) / (hi - c));
        fb.weights[std::size_t(m) * fb.n_bins + k] = float(std::max(0.0, w));
      }
    }
    return fb;
  }
};

// Computes frame t from the win samples ending at (t + 1) * hop, reading
// zeros before the start of the signal.
class MelExtractor {
 public:
  explicit MelExtractor(const MelConfig& cfg = {})
      : cfg_(cfg), filterbank_(MelFilterbank::build(cfg)), window_(cfg.win) {
    for (int i = 0; i < cfg.win; ++i) {
      window_[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / cfg.win);
    }
    in_ = static_cast<double*>(fftw_malloc(sizeof(double) * cfg.win));
    out_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (cfg.win / 2 + 1)));
    std::lock_guard<std::mutex> lock(planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(cfg.win, in_, out_, FFTW_ESTIMATE);
  }
  ~MelExtractor() {
    {
      std::lock_guard<std::mutex> lock(planner_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  MelExtractor(const MelExtractor&) = delete;
  MelExtractor& operator=(const MelExtractor&) = delete;

  const MelConfig& config() const { return cfg_; }
  const MelFilterbank& filterbank() const { return filterbank_; }

  static std::size_t frame_count(std::size_t samples, const MelConfig& cfg = {}) {
    return samples / std::size_t(cfg.hop);
  }

  // One frame; `end` is the exclusive sample index the window ends at.
  void frame(std::span<const float> samples, std::size_t end, std::span<float> out) const {
    const int win = cfg_.win;
    const std::ptrdiff_t start = std::ptrdiff_t(end) - win;
    for (int i = 0; i < win; ++i) {
      const std::ptrdiff_t idx = start + i;
      const double x = (idx >= 0 && std::size_t(idx) < samples.size()) ? double(samples[idx]) : 0.0;
      in_[i] = x * window_[i];
    }
    fftw_execute(plan_);
    const int bins = win / 2 + 1;
    power_.resize(bins);
    for (int k = 0; k < bins; ++k) power_[k] = out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
    for (int m = 0; m < cfg_.n_mels; ++m) {
      double acc = 0.0;
      for (int k = 0; k < bins; ++k) acc += double(filterbank_.weight(m, k)) * power_[k];
      out[m] = float(std::log(std::max(acc, cfg_.log_floor)));
    }
  }

  // Frames [first, last) of a signal held in `samples`; `offset` is the
  // absolute index of samples[0].
  Tensor2D frames(std::span<const float> samples, std::size_t offset, std::size_t first,
                  std::size_t last) const {
    Tensor2D out(cfg_.n_mels, last - first);
    std::vector<float> col(cfg_.n_mels);
    for (std::size_t t = first; t < last; ++t) {
      const std::size_t end = (t + 1) * cfg_.hop;
      const std::size_t start = end > std::size_t(cfg_.win) ? end - std::size_t(cfg_.win) : 0;
      if (start < offset) throw ShapeError("mel: frame precedes buffered samples");
      frame(samples, end - offset, col);
      for (int m = 0; m < cfg_.n_mels; ++m) out.at(m, t - first) = col[m];
    }
    return out;
  }

  Tensor2D operator()(const PcmAudio& pcm) const {
    if (pcm.sample_rate != cfg_.sample_rate) throw ShapeError("mel: sample rate mismatch");
    return frames(pcm.samples, 0, 0, frame_count(pcm.samples.size(), cfg_));
  }

 private:
  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }

  MelConfig cfg_;
  MelFilterbank filterbank_;
  std::vector<double> window_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
  mutable std::vector<double> power_;
};

inline Tensor2D mel_spectrogram(const PcmAudio& pcm, const MelConfig& cfg = {}) {
  return MelExtractor(cfg)(pcm);
}

}  // namespace chunkvc
