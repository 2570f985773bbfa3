#pragma once

// Dense numeric primitives: channel-major feature maps, causal 1-D
// convolution with carried state, attention, pixel shuffle, pooling.
//
// Numeric convention: values are stored as float. Every dot product is
// accumulated in double in a fixed order (bias, then input channel, then
// tap) and rounded to float once. A float*float product is exact in
// double, so the result does not depend on vector width, FMA contraction,
// or how the time axis is split into chunks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#if defined(__AVX2__) || defined(__AVX512F__)
#include <immintrin.h>
#endif

namespace chunkvc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Feature map with value (c, t) at data[c * frames + t].
class Tensor2D {
 public:
  Tensor2D() = default;
  Tensor2D(std::size_t channels, std::size_t frames, float fill = 0.0f)
      : channels_(channels), frames_(frames), data_(channels * frames, fill) {}
  Tensor2D(std::size_t channels, std::size_t frames, std::vector<float> data)
      : channels_(channels), frames_(frames), data_(std::move(data)) {
    if (data_.size() != channels_ * frames_) {
      throw ShapeError("Tensor2D: data length " + std::to_string(data_.size()) +
                       " != " + std::to_string(channels_) + " x " +
                       std::to_string(frames_));
    }
  }

  std::size_t channels() const { return channels_; }
  std::size_t frames() const { return frames_; }
  bool empty() const { return data_.empty(); }

  float& at(std::size_t c, std::size_t t) { return data_[c * frames_ + t]; }
  float at(std::size_t c, std::size_t t) const { return data_[c * frames_ + t]; }

  std::span<float> row(std::size_t c) { return {data_.data() + c * frames_, frames_}; }
  std::span<const float> row(std::size_t c) const {
    return {data_.data() + c * frames_, frames_};
  }

  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

  std::vector<float> column(std::size_t t) const {
    std::vector<float> out(channels_);
    for (std::size_t c = 0; c < channels_; ++c) out[c] = at(c, t);
    return out;
  }

  // Frames [begin, end).
  Tensor2D slice_frames(std::size_t begin, std::size_t end) const {
    if (begin > end || end > frames_) throw ShapeError("slice_frames: range out of bounds");
    Tensor2D out(channels_, end - begin);
    for (std::size_t c = 0; c < channels_; ++c) {
      std::copy(data_.begin() + c * frames_ + begin, data_.begin() + c * frames_ + end,
                out.data_.begin() + c * out.frames_);
    }
    return out;
  }

  Tensor2D slice_channels(std::size_t begin, std::size_t end) const {
    if (begin > end || end > channels_) throw ShapeError("slice_channels: range out of bounds");
    return Tensor2D(end - begin, frames_,
                    std::vector<float>(data_.begin() + begin * frames_,
                                       data_.begin() + end * frames_));
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor2D&, const Tensor2D&) = default;

 private:
  std::size_t channels_ = 0;
  std::size_t frames_ = 0;
  std::vector<float> data_;
};

// Concatenate along time; all parts must share the channel count. Parts
// with zero frames are skipped regardless of their channel count.
inline Tensor2D concat_frames(std::initializer_list<const Tensor2D*> parts) {
  std::size_t channels = 0;
  std::size_t frames = 0;
  bool have_channels = false;
  for (const Tensor2D* p : parts) {
    if (p->frames() == 0) continue;
    if (have_channels && p->channels() != channels) {
      throw ShapeError("concat_frames: channel mismatch");
    }
    channels = p->channels();
    have_channels = true;
    frames += p->frames();
  }
  Tensor2D out(channels, frames);
  std::size_t offset = 0;
  for (const Tensor2D* p : parts) {
    if (p->frames() == 0) continue;
    for (std::size_t c = 0; c < channels; ++c) {
      auto src = p->row(c);
      std::copy(src.begin(), src.end(), out.row(c).begin() + offset);
    }
    offset += p->frames();
  }
  return out;
}

inline Tensor2D concat_channels(std::initializer_list<const Tensor2D*> parts) {
  std::size_t frames = 0;
  std::size_t channels = 0;
  bool first = true;
  for (const Tensor2D* p : parts) {
    if (!first && p->frames() != frames) throw ShapeError("concat_channels: frame mismatch");
    frames = p->frames();
    channels += p->channels();
    first = false;
  }
  std::vector<float> data;
  data.reserve(channels * frames);
  for (const Tensor2D* p : parts) data.insert(data.end(), p->data().begin(), p->data().end());
  return Tensor2D(channels, frames, std::move(data));
}

// One vector repeated over `frames` columns.
inline Tensor2D broadcast_frames(std::span<const float> v, std::size_t frames) {
  Tensor2D out(v.size(), frames);
  for (std::size_t c = 0; c < v.size(); ++c) std::fill(out.row(c).begin(), out.row(c).end(), v[c]);
  return out;
}

inline Tensor2D column_tensor(std::span<const float> v) { return broadcast_frames(v, 1); }

struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 1;
  std::size_t dilation = 1;
  bool has_bias = true;

  std::size_t receptive_extent() const { return 1 + (kernel - 1) * dilation; }
  std::size_t history() const { return (kernel - 1) * dilation; }
};

// Last history() input frames seen by one convolution layer.
struct ConvState {
  Tensor2D tail;

  static ConvState zeros(const ConvSpec& spec) {
    return ConvState{Tensor2D(spec.in_channels, spec.history())};
  }
  friend bool operator==(const ConvState&, const ConvState&) = default;
};

namespace detail {

// acc + w * x. The product of two floats is exact in double, so the fused
// and unfused forms round identically.
inline double mac(double acc, double w, double x) {
#ifdef __FMA__
  return std::fma(w, x, acc);
#else
  return acc + w * x;
#endif
}

// Double-precision SIMD lane group used by the convolution kernel, and the
// output x time block each kernel call keeps in registers.
#if defined(__AVX512F__)
using vdouble = __m512d;
inline constexpr std::size_t kLanes = 8, kVecs = 4, kBlockOut = 6;
inline vdouble vload(const double* p) { return _mm512_loadu_pd(p); }
inline vdouble vsplat(double v) { return _mm512_set1_pd(v); }
inline vdouble vmac(vdouble acc, vdouble w, vdouble x) { return _mm512_fmadd_pd(w, x, acc); }
inline void vstore(double* p, vdouble v) { _mm512_storeu_pd(p, v); }
#elif defined(__AVX2__) && defined(__FMA__)
using vdouble = __m256d;
inline constexpr std::size_t kLanes = 4, kVecs = 3, kBlockOut = 4;
inline vdouble vload(const double* p) { return _mm256_loadu_pd(p); }
inline vdouble vsplat(double v) { return _mm256_set1_pd(v); }
inline vdouble vmac(vdouble acc, vdouble w, vdouble x) { return _mm256_fmadd_pd(w, x, acc); }
inline void vstore(double* p, vdouble v) { _mm256_storeu_pd(p, v); }
#else
typedef double vdouble __attribute__((vector_size(16)));
inline constexpr std::size_t kLanes = 2, kVecs = 2, kBlockOut = 3;
inline vdouble vload(const double* p) {
  vdouble v;
  std::memcpy(&v, p, sizeof v);
  return v;
}
inline vdouble vsplat(double v) { return vdouble{v, v}; }
inline vdouble vmac(vdouble acc, vdouble w, vdouble x) { return acc + w * x; }
inline void vstore(double* p, vdouble v) { std::memcpy(p, &v, sizeof v); }
#endif
inline constexpr std::size_t kBlockTime = kLanes * kVecs;
inline constexpr std::size_t kColumnOut = 4 * kLanes;

// Conv weights widened to double in two layouts: [block][i][k][kBlockOut]
// for the time-blocked kernel and [i][k][o] (o padded to kColumnOut) for
// single columns. Padding entries are zero.
struct PackedConv {
  std::size_t blocks = 0, column_pad = 0;
  std::vector<double> blocked, columns, bias_blocked, bias_columns;

  PackedConv() = default;
  PackedConv(std::span<const float> w, std::span<const float> bias, std::size_t out_ch, std::size_t in_ch,
             std::size_t kernel) {
    blocks = (out_ch + kBlockOut - 1) / kBlockOut;
    column_pad = (out_ch + kColumnOut - 1) / kColumnOut * kColumnOut;
    blocked.assign(blocks * in_ch * kernel * kBlockOut, 0.0);
    columns.assign(in_ch * kernel * column_pad, 0.0);
    bias_blocked.assign(blocks * kBlockOut, 0.0);
    bias_columns.assign(column_pad, 0.0);
    for (std::size_t o = 0; o < out_ch; ++o) {
      const std::size_t ob = o / kBlockOut, oo = o % kBlockOut;
      for (std::size_t i = 0; i < in_ch; ++i) {
        for (std::size_t k = 0; k < kernel; ++k) {
          const double v = w[(o * in_ch + i) * kernel + k];
          blocked[((ob * in_ch + i) * kernel + k) * kBlockOut + oo] = v;
          columns[(i * kernel + k) * column_pad + o] = v;
        }
      }
      if (!bias.empty()) bias_blocked[o] = bias_columns[o] = bias[o];
    }
  }
};

// out(o, t) = bias[o] + sum_i sum_k w[o][i][k] * x(i, t + k * dilation) for
// output block `ob` and kBlockTime frames from t0. `x` is the double copy of
// the padded input with row stride `xs`.
inline void conv_block(const PackedConv& pw, const double* x, std::size_t xs, std::size_t in_ch,
                       std::size_t kernel, std::size_t dilation, std::size_t ob, std::size_t t0,
                       double* acc_out) {
  vdouble acc[kBlockOut][kVecs];
  for (std::size_t oo = 0; oo < kBlockOut; ++oo) {
    const vdouble b = vsplat(pw.bias_blocked[ob * kBlockOut + oo]);
    for (std::size_t v = 0; v < kVecs; ++v) acc[oo][v] = b;
  }
  const double* wk = pw.blocked.data() + ob * in_ch * kernel * kBlockOut;
  for (std::size_t i = 0; i < in_ch; ++i) {
    const double* xrow = x + i * xs + t0;
    for (std::size_t k = 0; k < kernel; ++k, wk += kBlockOut) {
      const double* xk = xrow + k * dilation;
      vdouble xv[kVecs];
      for (std::size_t v = 0; v < kVecs; ++v) xv[v] = vload(xk + v * kLanes);
      for (std::size_t oo = 0; oo < kBlockOut; ++oo) {
        const vdouble wv = vsplat(wk[oo]);
        for (std::size_t v = 0; v < kVecs; ++v) acc[oo][v] = vmac(acc[oo][v], wv, xv[v]);
      }
    }
  }
  for (std::size_t oo = 0; oo < kBlockOut; ++oo) {
    for (std::size_t v = 0; v < kVecs; ++v) vstore(acc_out + oo * kBlockTime + v * kLanes, acc[oo][v]);
  }
}

// TC output frames from t0 for kColumnOut outputs from o0.
template <std::size_t TC>
inline void conv_columns(const PackedConv& pw, const double* x, std::size_t xs, std::size_t in_ch,
                         std::size_t kernel, std::size_t dilation, std::size_t o0, std::size_t t0,
                         double* acc_out) {
  constexpr std::size_t n = kColumnOut / kLanes;
  vdouble acc[TC][n];
  for (std::size_t v = 0; v < n; ++v) {
    const vdouble b = vload(pw.bias_columns.data() + o0 + v * kLanes);
    for (std::size_t c = 0; c < TC; ++c) acc[c][v] = b;
  }
  for (std::size_t i = 0; i < in_ch; ++i) {
    const double* xrow = x + i * xs + t0;
    for (std::size_t k = 0; k < kernel; ++k) {
      const double* wk = pw.columns.data() + (i * kernel + k) * pw.column_pad + o0;
      const double* xk = xrow + k * dilation;
      vdouble wv[n];
      for (std::size_t v = 0; v < n; ++v) wv[v] = vload(wk + v * kLanes);
      for (std::size_t c = 0; c < TC; ++c) {
        const vdouble xv = vsplat(xk[c]);
        for (std::size_t v = 0; v < n; ++v) acc[c][v] = vmac(acc[c][v], wv[v], xv);
      }
    }
  }
  for (std::size_t c = 0; c < TC; ++c) {
    for (std::size_t v = 0; v < n; ++v) vstore(acc_out + c * kColumnOut + v * kLanes, acc[c][v]);
  }
}

template <std::size_t TC>
inline void conv_column_group(const PackedConv& pw, const double* x, std::size_t xs, const ConvSpec& spec,
                              std::size_t frames, std::size_t t0, float* out) {
  double col[TC * kColumnOut];
  for (std::size_t o0 = 0; o0 < spec.out_channels; o0 += kColumnOut) {
    conv_columns<TC>(pw, x, xs, spec.in_channels, spec.kernel, spec.dilation, o0, t0, col);
    const std::size_t on = std::min(kColumnOut, spec.out_channels - o0);
    for (std::size_t c = 0; c < TC; ++c) {
      for (std::size_t oo = 0; oo < on; ++oo) out[(o0 + oo) * frames + t0 + c] = float(col[c * kColumnOut + oo]);
    }
  }
}

// `padded` holds history() + frames columns; output has `frames` columns.
inline Tensor2D conv_packed(const PackedConv& pw, const Tensor2D& padded, const ConvSpec& spec,
                            std::size_t frames) {
  const std::size_t in_ch = spec.in_channels, out_ch = spec.out_channels;
  const std::size_t xs = padded.frames();
  std::vector<double> x(padded.data().begin(), padded.data().end());
  Tensor2D out(out_ch, frames);
  float* o = out.data().data();
  double block[kBlockOut * kBlockTime];
  const std::size_t t_full = frames / kBlockTime * kBlockTime;
  for (std::size_t ob = 0; ob < pw.blocks && t_full > 0; ++ob) {
    const std::size_t o0 = ob * kBlockOut, on = std::min(kBlockOut, out_ch - o0);
    for (std::size_t t0 = 0; t0 < t_full; t0 += kBlockTime) {
      conv_block(pw, x.data(), xs, in_ch, spec.kernel, spec.dilation, ob, t0, block);
      for (std::size_t oo = 0; oo < on; ++oo) {
        for (std::size_t tt = 0; tt < kBlockTime; ++tt) {
          o[(o0 + oo) * frames + t0 + tt] = float(block[oo * kBlockTime + tt]);
        }
      }
    }
  }
  constexpr std::size_t kGroup = kLanes > 4 ? 4 : 3;
  std::size_t t = t_full;
  for (; t + kGroup <= frames; t += kGroup) conv_column_group<kGroup>(pw, x.data(), xs, spec, frames, t, o);
  for (; t < frames; ++t) conv_column_group<1>(pw, x.data(), xs, spec, frames, t, o);
  return out;
}

inline void check_spec(const ConvSpec& spec) {
  if (spec.kernel < 1) throw ShapeError("conv: kernel must be >= 1");
  if (spec.dilation < 1) throw ShapeError("conv: dilation must be >= 1");
  if (spec.in_channels < 1 || spec.out_channels < 1) throw ShapeError("conv: empty channel count");
}

}  // namespace detail

// Causal convolution layer with weights in (out, in, kernel) order.
class Conv1d {
 public:
  Conv1d() = default;

  Conv1d(const ConvSpec& spec, std::span<const float> weights, std::span<const float> bias = {})
      : spec_(spec) {
    detail::check_spec(spec);
    const std::size_t n = spec.out_channels * spec.in_channels * spec.kernel;
    if (weights.size() != n) {
      throw ShapeError("conv: weight length " + std::to_string(weights.size()) + " != " +
                       std::to_string(n));
    }
    if (spec.has_bias && bias.size() != spec.out_channels) throw ShapeError("conv: bias length mismatch");
    if (!spec.has_bias && !bias.empty()) throw ShapeError("conv: bias given for a layer without bias");
    packed_ = detail::PackedConv(weights, bias, spec.out_channels, spec.in_channels, spec.kernel);
  }

  const ConvSpec& spec() const { return spec_; }
  ConvState initial_state() const { return ConvState::zeros(spec_); }

  // Output frame t reads only input frames <= t and the carried tail.
  Tensor2D forward(const Tensor2D& x, ConvState& state) const {
    if (x.channels() != spec_.in_channels && x.frames() > 0) {
      throw ShapeError("conv: input has " + std::to_string(x.channels()) + " channels, expected " +
                       std::to_string(spec_.in_channels));
    }
    const std::size_t hist = spec_.history();
    if (state.tail.channels() != spec_.in_channels || state.tail.frames() != hist) {
      throw ShapeError("conv: state does not match layer");
    }
    if (x.frames() == 0) return Tensor2D(spec_.out_channels, 0);
    Tensor2D padded = concat_frames({&state.tail, &x});
    Tensor2D out = detail::conv_packed(packed_, padded, spec_, x.frames());
    state.tail = padded.slice_frames(padded.frames() - hist, padded.frames());
    return out;
  }

  // Single-shot call from zero history.
  Tensor2D forward(const Tensor2D& x) const {
    ConvState s = initial_state();
    return forward(x, s);
  }

 private:
  ConvSpec spec_;
  detail::PackedConv packed_;
};

inline Tensor2D causal_conv1d(const Tensor2D& x, const ConvSpec& spec,
                              std::span<const float> weights, std::span<const float> bias,
                              ConvState& state) {
  return Conv1d(spec, weights, bias).forward(x, state);
}

// Per-frame affine map; W is (out_dim, in_dim).
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t out_dim, std::size_t in_dim, std::span<const float> weights,
         std::span<const float> bias = {})
      : conv_(ConvSpec{in_dim, out_dim, 1, 1, !bias.empty()}, weights, bias) {}

  std::size_t in_dim() const { return conv_.spec().in_channels; }
  std::size_t out_dim() const { return conv_.spec().out_channels; }

  Tensor2D operator()(const Tensor2D& x) const {
    if (x.channels() != in_dim()) {
      throw ShapeError("linear: input dim " + std::to_string(x.channels()) + " != " +
                       std::to_string(in_dim()));
    }
    ConvState none{Tensor2D(in_dim(), 0)};
    return conv_.forward(x, none);
  }

 private:
  Conv1d conv_;
};

inline Tensor2D linear(const Tensor2D& x, std::size_t out_dim, std::span<const float> weights,
                       std::span<const float> bias) {
  return Linear(out_dim, x.channels(), weights, bias)(x);
}

inline std::vector<float> softmax(std::span<const float> v) {
  if (v.empty()) throw ShapeError("softmax: empty vector");
  const float m = *std::max_element(v.begin(), v.end());
  std::vector<double> e(v.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    e[i] = std::exp(double(v[i]) - double(m));
    sum += e[i];
  }
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = float(e[i] / sum);
  return out;
}

// Index of the largest value; ties go to the smallest index.
inline std::size_t argmax(std::span<const float> v) {
  if (v.empty()) throw ShapeError("argmax: empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

// Columns are queries/keys/values. Q and K share the feature dimension d;
// scores are scaled by 1/sqrt(d). Optionally returns the attention weights
// as (keys x queries).
inline Tensor2D scaled_dot_attention(const Tensor2D& q, const Tensor2D& k, const Tensor2D& v,
                                     Tensor2D* weights_out = nullptr) {
  if (q.channels() != k.channels()) throw ShapeError("attention: query/key dimension mismatch");
  if (k.frames() != v.frames()) throw ShapeError("attention: key/value count mismatch");
  if (k.frames() == 0) throw ShapeError("attention: empty key set");
  const std::size_t d = q.channels();
  const std::size_t nq = q.frames();
  const std::size_t nk = k.frames();
  const double scale = 1.0 / std::sqrt(double(d));
  Tensor2D out(v.channels(), nq);
  if (weights_out) *weights_out = Tensor2D(nk, nq);
  std::vector<float> scores(nk);
  for (std::size_t qi = 0; qi < nq; ++qi) {
    for (std::size_t ki = 0; ki < nk; ++ki) {
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) acc += double(q.at(c, qi)) * double(k.at(c, ki));
      scores[ki] = float(acc * scale);
    }
    const std::vector<float> p = softmax(scores);
    for (std::size_t c = 0; c < v.channels(); ++c) {
      double acc = 0.0;
      for (std::size_t ki = 0; ki < nk; ++ki) acc += double(p[ki]) * double(v.at(c, ki));
      out.at(c, qi) = float(acc);
    }
    if (weights_out) {
      for (std::size_t ki = 0; ki < nk; ++ki) weights_out->at(ki, qi) = p[ki];
    }
  }
  return out;
}

// (C*r, T) -> (C, r*T) with out(c, t*r + j) = x(c*r + j, t).
inline Tensor2D pixel_shuffle(const Tensor2D& x, std::size_t r) {
  if (r == 0 || x.channels() % r != 0) {
    throw ShapeError("pixel_shuffle: channels " + std::to_string(x.channels()) +
                     " not divisible by " + std::to_string(r));
  }
  const std::size_t c_out = x.channels() / r;
  const std::size_t t_in = x.frames();
  Tensor2D out(c_out, t_in * r);
  for (std::size_t c = 0; c < c_out; ++c) {
    for (std::size_t j = 0; j < r; ++j) {
      auto src = x.row(c * r + j);
      float* dst = out.row(c).data();
      for (std::size_t t = 0; t < t_in; ++t) dst[t * r + j] = src[t];
    }
  }
  return out;
}

inline Tensor2D pixel_unshuffle(const Tensor2D& y, std::size_t r) {
  if (r == 0 || y.frames() % r != 0) throw ShapeError("pixel_unshuffle: frames not divisible");
  const std::size_t t_in = y.frames() / r;
  Tensor2D out(y.channels() * r, t_in);
  for (std::size_t c = 0; c < y.channels(); ++c) {
    for (std::size_t j = 0; j < r; ++j) {
      for (std::size_t t = 0; t < t_in; ++t) out.at(c * r + j, t) = y.at(c, t * r + j);
    }
  }
  return out;
}

// Non-overlapping window means; a trailing partial window is averaged
// over its actual length.
inline Tensor2D mean_pool_time(const Tensor2D& x, std::size_t stride) {
  if (stride == 0) throw ShapeError("mean_pool_time: stride must be >= 1");
  const std::size_t n_out = (x.frames() + stride - 1) / stride;
  Tensor2D out(x.channels(), n_out);
  for (std::size_t c = 0; c < x.channels(); ++c) {
    auto row = x.row(c);
    for (std::size_t w = 0; w < n_out; ++w) {
      const std::size_t b = w * stride;
      const std::size_t e = std::min(b + stride, x.frames());
      double acc = 0.0;
      for (std::size_t t = b; t < e; ++t) acc += double(row[t]);
      out.at(c, w) = float(acc / double(e - b));
    }
  }
  return out;
}

template <typename F>
inline Tensor2D map_values(Tensor2D x, F&& f) {
  for (float& v : x.data()) v = f(v);
  return x;
}

inline Tensor2D relu(Tensor2D x) {
  return map_values(std::move(x), [](float v) { return v > 0.0f ? v : 0.0f; });
}

inline Tensor2D leaky_relu(Tensor2D x, float slope) {
  return map_values(std::move(x), [slope](float v) { return v > 0.0f ? v : v * slope; });
}

inline Tensor2D add(Tensor2D a, const Tensor2D& b) {
  if (a.channels() != b.channels() || a.frames() != b.frames()) throw ShapeError("add: shape mismatch");
  for (std::size_t i = 0; i < a.data().size(); ++i) a.data()[i] += b.data()[i];
  return a;
}

// tanh(a) * sigmoid(b) over the two channel halves of x.
inline Tensor2D gated_activation(const Tensor2D& x) {
  if (x.channels() % 2 != 0) throw ShapeError("gated_activation: odd channel count");
  const std::size_t h = x.channels() / 2;
  Tensor2D out(h, x.frames());
  for (std::size_t c = 0; c < h; ++c) {
    for (std::size_t t = 0; t < x.frames(); ++t) {
      const double a = std::tanh(double(x.at(c, t)));
      const double g = 1.0 / (1.0 + std::exp(-double(x.at(c + h, t))));
      out.at(c, t) = float(a * g);
    }
  }
  return out;
}

inline float max_abs_diff(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) return std::numeric_limits<float>::infinity();
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace chunkvc
