#pragma once

// Minimal segmentation network with manual backpropagation:
//
//   input H x W x 3
//     -> conv1 3x3 pad 1, 16ch, ReLU
//     -> 2x2 average pool, stride 2
//     -> conv2 3x3 pad 1, 32ch, ReLU
//     -> dropout (inverted, rate 0.5)
//     -> conv3 3x3 pad 1, 16ch, ReLU        = e_l (feature map)
//     -> conv4 1x1, 2ch, sigmoid
//     -> bilinear upsample x2               = prob map H x W x 2
//
// Weight layout is kh x kw x cin x cout so the innermost loops run over
// contiguous output channels. Everything is templated on the scalar type;
// float is the training path, double backs the finite-difference checks.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "dpl/errors.hpp"
#include "dpl/interp.hpp"
#include "dpl/rng.hpp"
#include "dpl/tensor.hpp"

namespace dpl {

inline constexpr uint32_t kConv1Channels = 16;
inline constexpr uint32_t kConv2Channels = 32;
inline constexpr uint32_t kFeatureChannels = 16;  // e_l depth (L)
inline constexpr uint32_t kNumClasses = 2;        // disc, cup
inline constexpr float kDefaultDropoutRate = 0.5f;

enum class Mode { kTrain, kEval, kMc };

template <typename T>
struct ConvT {
  TensorT<T> w;  // kh x kw x cin x cout
  TensorT<T> b;  // cout
};

template <typename T>
struct NetParamsT {
  ConvT<T> conv1, conv2, conv3, conv4;

  template <typename F>
  void for_each(F&& f) {
    f("conv1.w", conv1.w); f("conv1.b", conv1.b);
    f("conv2.w", conv2.w); f("conv2.b", conv2.b);
    f("conv3.w", conv3.w); f("conv3.b", conv3.b);
    f("conv4.w", conv4.w); f("conv4.b", conv4.b);
  }
  template <typename F>
  void for_each(F&& f) const {
    f("conv1.w", conv1.w); f("conv1.b", conv1.b);
    f("conv2.w", conv2.w); f("conv2.b", conv2.b);
    f("conv3.w", conv3.w); f("conv3.b", conv3.b);
    f("conv4.w", conv4.w); f("conv4.b", conv4.b);
  }

  template <typename U>
  NetParamsT<U> cast() const {
    NetParamsT<U> out;
    out.conv1 = {conv1.w.template cast<U>(), conv1.b.template cast<U>()};
    out.conv2 = {conv2.w.template cast<U>(), conv2.b.template cast<U>()};
    out.conv3 = {conv3.w.template cast<U>(), conv3.b.template cast<U>()};
    out.conv4 = {conv4.w.template cast<U>(), conv4.b.template cast<U>()};
    return out;
  }

  bool finite() const {
    bool ok = true;
    for_each([&](const char*, const TensorT<T>& t) {
      for (T x : t.v)
        if (!std::isfinite(static_cast<double>(x))) ok = false;
    });
    return ok;
  }
};

using ModelParams = NetParamsT<float>;
using Gradients = NetParamsT<float>;

// Zero-initialized parameter structure with the network's fixed shapes.
template <typename T>
NetParamsT<T> zero_params() {
  NetParamsT<T> p;
  p.conv1 = {TensorT<T>({3, 3, 3, kConv1Channels}), TensorT<T>({kConv1Channels})};
  p.conv2 = {TensorT<T>({3, 3, kConv1Channels, kConv2Channels}), TensorT<T>({kConv2Channels})};
  p.conv3 = {TensorT<T>({3, 3, kConv2Channels, kFeatureChannels}), TensorT<T>({kFeatureChannels})};
  p.conv4 = {TensorT<T>({1, 1, kFeatureChannels, kNumClasses}), TensorT<T>({kNumClasses})};
  return p;
}

// He-normal weights (std = sqrt(2 / fan_in)), zero biases.
inline ModelParams init_params(Rng& rng) {
  ModelParams p = zero_params<float>();
  auto he_fill = [&](Tensor& w) {
    const uint32_t fan_in = w.dims[0] * w.dims[1] * w.dims[2];
    const float std = std::sqrt(2.0f / static_cast<float>(fan_in));
    for (float& x : w.v) x = std * rng.normal();
  };
  he_fill(p.conv1.w);
  he_fill(p.conv2.w);
  he_fill(p.conv3.w);
  he_fill(p.conv4.w);
  return p;
}

namespace detail {

template <typename T>
std::vector<T> zero_pad1(const TensorT<T>& in) {
  const uint32_t H = in.dims[0], W = in.dims[1], C = in.dims[2];
  std::vector<T> pad(static_cast<size_t>(H + 2) * (W + 2) * C, T(0));
  for (uint32_t y = 0; y < H; ++y)
    std::memcpy(&pad[((y + 1) * (W + 2) + 1) * C], &in.at(y, 0, 0),
                sizeof(T) * W * C);
  return pad;
}

}  // namespace detail

template <typename T>
void conv3x3_forward(const TensorT<T>& in, const ConvT<T>& layer, TensorT<T>& out) {
  const uint32_t H = in.dims[0], W = in.dims[1], Ci = in.dims[2];
  const uint32_t Co = layer.w.dims[3];
  const uint32_t Wp = W + 2;
  const std::vector<T> pad = detail::zero_pad1(in);
  out = TensorT<T>({H, W, Co});
  T acc[kConv2Channels];
  for (uint32_t y = 0; y < H; ++y)
    for (uint32_t x = 0; x < W; ++x) {
      for (uint32_t co = 0; co < Co; ++co) acc[co] = layer.b.v[co];
      for (uint32_t ky = 0; ky < 3; ++ky) {
        const T* prow = &pad[((y + ky) * Wp + x) * Ci];
        for (uint32_t kx = 0; kx < 3; ++kx) {
          const T* pv = prow + kx * Ci;
          const T* wrow = &layer.w.v[(ky * 3 + kx) * Ci * Co];
          for (uint32_t ci = 0; ci < Ci; ++ci) {
            const T xv = pv[ci];
            const T* wr = wrow + ci * Co;
            for (uint32_t co = 0; co < Co; ++co) acc[co] += xv * wr[co];
          }
        }
      }
      std::memcpy(&out.at(y, x, 0), acc, sizeof(T) * Co);
    }
}

template <typename T>
void conv3x3_backward(const TensorT<T>& in, const ConvT<T>& layer,
                      const TensorT<T>& dOut, TensorT<T>& dIn, ConvT<T>& dLayer) {
  const uint32_t H = in.dims[0], W = in.dims[1], Ci = in.dims[2];
  const uint32_t Co = layer.w.dims[3];
  const uint32_t Wp = W + 2;
  const std::vector<T> pad = detail::zero_pad1(in);
  std::vector<T> dpad(pad.size(), T(0));
  dLayer.w = TensorT<T>(layer.w.dims);
  dLayer.b = TensorT<T>(layer.b.dims);
  for (uint32_t y = 0; y < H; ++y)
    for (uint32_t x = 0; x < W; ++x) {
      const T* g = &dOut.at(y, x, 0);
      for (uint32_t ky = 0; ky < 3; ++ky)
        for (uint32_t kx = 0; kx < 3; ++kx) {
          const size_t base = ((y + ky) * Wp + x + kx) * Ci;
          const T* pv = &pad[base];
          T* dp = &dpad[base];
          const T* wrow = &layer.w.v[(ky * 3 + kx) * Ci * Co];
          T* dwrow = &dLayer.w.v[(ky * 3 + kx) * Ci * Co];
          for (uint32_t ci = 0; ci < Ci; ++ci) {
            const T* wr = wrow + ci * Co;
            T* dwr = dwrow + ci * Co;
            const T xv = pv[ci];
            T s = T(0);
            for (uint32_t co = 0; co < Co; ++co) {
              s += g[co] * wr[co];
              dwr[co] += g[co] * xv;
            }
            dp[ci] += s;
          }
        }
      for (uint32_t co = 0; co < Co; ++co) dLayer.b.v[co] += g[co];
    }
  dIn = TensorT<T>(in.dims);
  for (uint32_t y = 0; y < H; ++y)
    std::memcpy(&dIn.at(y, 0, 0), &dpad[((y + 1) * Wp + 1) * Ci], sizeof(T) * W * Ci);
}

template <typename T>
void conv1x1_forward(const TensorT<T>& in, const ConvT<T>& layer, TensorT<T>& out) {
  const uint32_t H = in.dims[0], W = in.dims[1], Ci = in.dims[2];
  const uint32_t Co = layer.w.dims[3];
  out = TensorT<T>({H, W, Co});
  for (uint32_t y = 0; y < H; ++y)
    for (uint32_t x = 0; x < W; ++x) {
      const T* pv = &in.at(y, x, 0);
      T* o = &out.at(y, x, 0);
      for (uint32_t co = 0; co < Co; ++co) o[co] = layer.b.v[co];
      for (uint32_t ci = 0; ci < Ci; ++ci) {
        const T xv = pv[ci];
        const T* wr = &layer.w.v[ci * Co];
        for (uint32_t co = 0; co < Co; ++co) o[co] += xv * wr[co];
      }
    }
}

template <typename T>
void conv1x1_backward(const TensorT<T>& in, const ConvT<T>& layer,
                      const TensorT<T>& dOut, TensorT<T>& dIn, ConvT<T>& dLayer) {
  const uint32_t H = in.dims[0], W = in.dims[1], Ci = in.dims[2];
  const uint32_t Co = layer.w.dims[3];
  dLayer.w = TensorT<T>(layer.w.dims);
  dLayer.b = TensorT<T>(layer.b.dims);
  dIn = TensorT<T>(in.dims);
  for (uint32_t y = 0; y < H; ++y)
    for (uint32_t x = 0; x < W; ++x) {
      const T* pv = &in.at(y, x, 0);
      const T* g = &dOut.at(y, x, 0);
      T* di = &dIn.at(y, x, 0);
      for (uint32_t ci = 0; ci < Ci; ++ci) {
        const T* wr = &layer.w.v[ci * Co];
        T* dwr = &dLayer.w.v[ci * Co];
        const T xv = pv[ci];
        T s = T(0);
        for (uint32_t co = 0; co < Co; ++co) {
          s += g[co] * wr[co];
          dwr[co] += g[co] * xv;
        }
        di[ci] = s;
      }
      for (uint32_t co = 0; co < Co; ++co) dLayer.b.v[co] += g[co];
    }
}

template <typename T>
struct ForwardCacheT {
  uint32_t H = 0, W = 0;
  float dropout_rate = 0.0f;
  TensorT<T> input;             // H x W x 3
  TensorT<T> z1, a1;            // H x W x 16
  TensorT<T> p1;                // H/2 x W/2 x 16
  TensorT<T> z2, a2;            // H/2 x W/2 x 32
  std::vector<T> dropout_scale; // per element of a2: 0 or 1/(1-rate); empty = off
  TensorT<T> a2d;               // a2 after dropout
  TensorT<T> z3, e_l;           // H/2 x W/2 x 16; e_l = relu(z3)
  TensorT<T> z4, p_low;         // H/2 x W/2 x 2
  TensorT<T> prob;              // H x W x 2
};

using ForwardCache = ForwardCacheT<float>;

// Dropout is sampled in kTrain and kMc modes (inverted scaling, so kEval is
// a plain pass). `forced_dropout_mask` overrides sampling with an explicit
// keep/drop pattern over a2's elements; it exists for tests that need a
// pinned mask.
template <typename T>
ForwardCacheT<T> forward(const NetParamsT<T>& params, const TensorT<T>& image,
                         Mode mode, Rng* rng = nullptr,
                         float dropout_rate = kDefaultDropoutRate,
                         const std::vector<uint8_t>* forced_dropout_mask = nullptr) {
  if (image.dims.size() != 3 || image.dims[2] != 3)
    throw shape_error("forward expects an H x W x 3 image");
  const uint32_t H = image.dims[0], W = image.dims[1];
  if (H % 2 != 0 || W % 2 != 0)
    throw shape_error("forward requires even H and W (2x2 pooling)");
  if (!(dropout_rate >= 0.0f && dropout_rate < 1.0f))
    throw shape_error("dropout rate must be in [0, 1)");

  ForwardCacheT<T> c;
  c.H = H;
  c.W = W;
  c.dropout_rate = dropout_rate;
  c.input = image;

  conv3x3_forward(c.input, params.conv1, c.z1);
  c.a1 = c.z1;
  for (T& v : c.a1.v) v = v > T(0) ? v : T(0);

  const uint32_t Hh = H / 2, Wh = W / 2;
  c.p1 = TensorT<T>({Hh, Wh, kConv1Channels});
  for (uint32_t y = 0; y < Hh; ++y)
    for (uint32_t x = 0; x < Wh; ++x)
      for (uint32_t ch = 0; ch < kConv1Channels; ++ch)
        c.p1.at(y, x, ch) = (c.a1.at(2 * y, 2 * x, ch) + c.a1.at(2 * y, 2 * x + 1, ch) +
                             c.a1.at(2 * y + 1, 2 * x, ch) + c.a1.at(2 * y + 1, 2 * x + 1, ch)) /
                            T(4);

  conv3x3_forward(c.p1, params.conv2, c.z2);
  c.a2 = c.z2;
  for (T& v : c.a2.v) v = v > T(0) ? v : T(0);

  const bool sample_dropout =
      (mode != Mode::kEval) && (dropout_rate > 0.0f || forced_dropout_mask != nullptr);
  if (sample_dropout) {
    if (forced_dropout_mask == nullptr && rng == nullptr)
      throw shape_error("forward: rng required when dropout is sampled");
    if (forced_dropout_mask != nullptr && forced_dropout_mask->size() != c.a2.v.size())
      throw shape_error("forward: forced dropout mask size mismatch");
    const T keep_scale = T(1) / (T(1) - static_cast<T>(dropout_rate));
    c.dropout_scale.resize(c.a2.v.size());
    for (size_t i = 0; i < c.a2.v.size(); ++i) {
      const bool keep = forced_dropout_mask ? (*forced_dropout_mask)[i] != 0
                                            : rng->next_f32() >= dropout_rate;
      c.dropout_scale[i] = keep ? keep_scale : T(0);
    }
    c.a2d = c.a2;
    for (size_t i = 0; i < c.a2d.v.size(); ++i) c.a2d.v[i] *= c.dropout_scale[i];
  } else {
    c.a2d = c.a2;
  }

  conv3x3_forward(c.a2d, params.conv3, c.z3);
  c.e_l = c.z3;
  for (T& v : c.e_l.v) v = v > T(0) ? v : T(0);

  conv1x1_forward(c.e_l, params.conv4, c.z4);
  c.p_low = c.z4;
  for (T& v : c.p_low.v) v = T(1) / (T(1) + std::exp(-v));

  c.prob = bilinear_upsample(c.p_low, H, W);
  return c;
}

template <typename T>
NetParamsT<T> backward(const NetParamsT<T>& params, const ForwardCacheT<T>& cache,
                       const TensorT<T>& dProb) {
  if (!dProb.same_shape(cache.prob))
    throw shape_error("backward: upstream gradient shape mismatch");
  const uint32_t Hh = cache.H / 2, Wh = cache.W / 2;
  NetParamsT<T> g;

  TensorT<T> dp_low = bilinear_upsample_backward(dProb, Hh, Wh);
  TensorT<T> dz4 = dp_low;
  for (size_t i = 0; i < dz4.v.size(); ++i) {
    const T p = cache.p_low.v[i];
    dz4.v[i] *= p * (T(1) - p);
  }

  TensorT<T> de;
  conv1x1_backward(cache.e_l, params.conv4, dz4, de, g.conv4);
  for (size_t i = 0; i < de.v.size(); ++i)
    if (!(cache.z3.v[i] > T(0))) de.v[i] = T(0);

  TensorT<T> da2d;
  conv3x3_backward(cache.a2d, params.conv3, de, da2d, g.conv3);
  if (!cache.dropout_scale.empty())
    for (size_t i = 0; i < da2d.v.size(); ++i) da2d.v[i] *= cache.dropout_scale[i];
  for (size_t i = 0; i < da2d.v.size(); ++i)
    if (!(cache.z2.v[i] > T(0))) da2d.v[i] = T(0);

  TensorT<T> dp1;
  conv3x3_backward(cache.p1, params.conv2, da2d, dp1, g.conv2);

  TensorT<T> da1({cache.H, cache.W, kConv1Channels});
  for (uint32_t y = 0; y < Hh; ++y)
    for (uint32_t x = 0; x < Wh; ++x)
      for (uint32_t ch = 0; ch < kConv1Channels; ++ch) {
        const T quarter = dp1.at(y, x, ch) / T(4);
        da1.at(2 * y, 2 * x, ch) = quarter;
        da1.at(2 * y, 2 * x + 1, ch) = quarter;
        da1.at(2 * y + 1, 2 * x, ch) = quarter;
        da1.at(2 * y + 1, 2 * x + 1, ch) = quarter;
      }
  for (size_t i = 0; i < da1.v.size(); ++i)
    if (!(cache.z1.v[i] > T(0))) da1.v[i] = T(0);

  TensorT<T> dInput;
  conv3x3_backward(cache.input, params.conv1, da1, dInput, g.conv1);
  return g;
}

template <typename T>
struct AdamStateT {
  NetParamsT<T> m, v;
  uint64_t t = 0;
};

using AdamState = AdamStateT<float>;

template <typename T>
AdamStateT<T> adam_init() {
  return {zero_params<T>(), zero_params<T>(), 0};
}

// Bias-corrected Adam. Throws on non-finite gradients.
template <typename T>
void adam_step(NetParamsT<T>& params, const NetParamsT<T>& grads, AdamStateT<T>& state,
               T lr, T beta1 = T(0.9), T beta2 = T(0.99), T eps = T(1e-8)) {
  if (!(lr > T(0))) throw shape_error("adam_step: lr must be > 0");
  if (!grads.finite())
    throw std::runtime_error("adam_step: non-finite gradient at t=" +
                             std::to_string(state.t + 1));
  state.t += 1;
  const T bc1 = T(1) - std::pow(beta1, static_cast<T>(state.t));
  const T bc2 = T(1) - std::pow(beta2, static_cast<T>(state.t));

  auto update = [&](TensorT<T>& p, const TensorT<T>& gt, TensorT<T>& m, TensorT<T>& v) {
    for (size_t i = 0; i < p.v.size(); ++i) {
      m.v[i] = beta1 * m.v[i] + (T(1) - beta1) * gt.v[i];
      v.v[i] = beta2 * v.v[i] + (T(1) - beta2) * gt.v[i] * gt.v[i];
      const T mhat = m.v[i] / bc1;
      const T vhat = v.v[i] / bc2;
      p.v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  };
  update(params.conv1.w, grads.conv1.w, state.m.conv1.w, state.v.conv1.w);
  update(params.conv1.b, grads.conv1.b, state.m.conv1.b, state.v.conv1.b);
  update(params.conv2.w, grads.conv2.w, state.m.conv2.w, state.v.conv2.w);
  update(params.conv2.b, grads.conv2.b, state.m.conv2.b, state.v.conv2.b);
  update(params.conv3.w, grads.conv3.w, state.m.conv3.w, state.v.conv3.w);
  update(params.conv3.b, grads.conv3.b, state.m.conv3.b, state.v.conv3.b);
  update(params.conv4.w, grads.conv4.w, state.m.conv4.w, state.v.conv4.w);
  update(params.conv4.b, grads.conv4.b, state.m.conv4.b, state.v.conv4.b);
}

// K stochastic forward passes with dropout enabled at inference.
inline std::vector<ProbMap> mc_passes(const ModelParams& params, const Image& image,
                                      uint32_t K, Rng& rng,
                                      float dropout_rate = kDefaultDropoutRate) {
  if (K < 2) throw shape_error("mc_passes: K must be >= 2");
  std::vector<ProbMap> out;
  out.reserve(K);
  for (uint32_t k = 0; k < K; ++k)
    out.push_back(forward(params, image, Mode::kMc, &rng, dropout_rate).prob);
  return out;
}

}  // namespace dpl
