#pragma once

// Align-corners bilinear upsampling and its gradient. Source coordinate for
// destination index y is y * (Hs-1) / (Hd-1); equal sizes are an exact copy
// and a 1-pixel source axis replicates.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "dpl/errors.hpp"
#include "dpl/tensor.hpp"

namespace dpl {

namespace detail {

struct InterpTap {
  uint32_t i0, i1;
  double w1;  // weight of i1; i0 gets (1 - w1)
};

inline std::vector<InterpTap> interp_taps(uint32_t src, uint32_t dst) {
  if (src == 0) throw shape_error("bilinear_upsample: empty source axis");
  if (dst < src) throw shape_error("bilinear_upsample: destination smaller than source");
  std::vector<InterpTap> taps(dst);
  if (src == 1 || dst == 1) {
    for (auto& t : taps) t = {0, 0, 0.0};
    return taps;
  }
  const double r = static_cast<double>(src - 1) / static_cast<double>(dst - 1);
  for (uint32_t i = 0; i < dst; ++i) {
    const double s = i * r;
    auto i0 = static_cast<uint32_t>(std::floor(s));
    if (i0 >= src - 1) i0 = src - 2;
    taps[i] = {i0, i0 + 1, s - i0};
  }
  return taps;
}

}  // namespace detail

template <typename T>
TensorT<T> bilinear_upsample(const TensorT<T>& src, uint32_t H, uint32_t W) {
  if (src.dims.size() != 3) throw shape_error("bilinear_upsample expects H x W x C");
  const uint32_t Hs = src.dims[0], Ws = src.dims[1], C = src.dims[2];
  if (Hs == H && Ws == W) return src;
  const auto ty = detail::interp_taps(Hs, H);
  const auto tx = detail::interp_taps(Ws, W);
  TensorT<T> dst({H, W, C});
  for (uint32_t y = 0; y < H; ++y) {
    const auto [y0, y1, wy] = ty[y];
    for (uint32_t x = 0; x < W; ++x) {
      const auto [x0, x1, wx] = tx[x];
      const T* s00 = &src.at(y0, x0, 0);
      const T* s01 = &src.at(y0, x1, 0);
      const T* s10 = &src.at(y1, x0, 0);
      const T* s11 = &src.at(y1, x1, 0);
      T* d = &dst.at(y, x, 0);
      const T w00 = static_cast<T>((1.0 - wy) * (1.0 - wx));
      const T w01 = static_cast<T>((1.0 - wy) * wx);
      const T w10 = static_cast<T>(wy * (1.0 - wx));
      const T w11 = static_cast<T>(wy * wx);
      for (uint32_t c = 0; c < C; ++c)
        d[c] = w00 * s00[c] + w01 * s01[c] + w10 * s10[c] + w11 * s11[c];
    }
  }
  return dst;
}

// Scatters the upstream gradient back through the interpolation weights.
template <typename T>
TensorT<T> bilinear_upsample_backward(const TensorT<T>& dDst, uint32_t Hs, uint32_t Ws) {
  if (dDst.dims.size() != 3) throw shape_error("bilinear_upsample_backward expects H x W x C");
  const uint32_t H = dDst.dims[0], W = dDst.dims[1], C = dDst.dims[2];
  if (Hs == H && Ws == W) return dDst;
  const auto ty = detail::interp_taps(Hs, H);
  const auto tx = detail::interp_taps(Ws, W);
  TensorT<T> dSrc({Hs, Ws, C});
  for (uint32_t y = 0; y < H; ++y) {
    const auto [y0, y1, wy] = ty[y];
    for (uint32_t x = 0; x < W; ++x) {
      const auto [x0, x1, wx] = tx[x];
      const T* g = &dDst.at(y, x, 0);
      const T w00 = static_cast<T>((1.0 - wy) * (1.0 - wx));
      const T w01 = static_cast<T>((1.0 - wy) * wx);
      const T w10 = static_cast<T>(wy * (1.0 - wx));
      const T w11 = static_cast<T>(wy * wx);
      T* d00 = &dSrc.at(y0, x0, 0);
      T* d01 = &dSrc.at(y0, x1, 0);
      T* d10 = &dSrc.at(y1, x0, 0);
      T* d11 = &dSrc.at(y1, x1, 0);
      for (uint32_t c = 0; c < C; ++c) {
        d00[c] += w00 * g[c];
        d01[c] += w01 * g[c];
        d10[c] += w10 * g[c];
        d11[c] += w11 * g[c];
      }
    }
  }
  return dSrc;
}

}  // namespace dpl
