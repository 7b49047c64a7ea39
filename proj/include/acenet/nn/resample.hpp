// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "acenet/ops.hpp"

namespace acenet::nn {

enum class UpsampleMode { kBilinear, kNearest };

namespace detail {

struct Tap {
  std::size_t index;
  double weight;
};

// For each output coordinate along one axis, the input taps it reads.
using AxisTaps = std::vector<std::vector<Tap>>;

inline AxisTaps bilinear_taps(std::size_t in, std::size_t out) {
  AxisTaps taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    auto i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    const double frac = src - static_cast<double>(i0);
    if (i1 == i0 || frac == 0.0)
      taps[o] = {{i0, 1.0}};
    else
      taps[o] = {{i0, 1.0 - frac}, {i1, frac}};
  }
  return taps;
}

inline AxisTaps nearest_taps(std::size_t in, std::size_t out) {
  AxisTaps taps(out);
  for (std::size_t o = 0; o < out; ++o) taps[o] = {{o * in / out, 1.0}};
  return taps;
}

// Bin o covers [floor(o*in/out), ceil((o+1)*in/out)).
inline AxisTaps adaptive_pool_taps(std::size_t in, std::size_t out) {
  AxisTaps taps(out);
  for (std::size_t o = 0; o < out; ++o) {
    const std::size_t begin = o * in / out;
    const std::size_t end = ((o + 1) * in + out - 1) / out;
    const double w = 1.0 / static_cast<double>(end - begin);
    for (std::size_t i = begin; i < end; ++i) taps[o].push_back({i, w});
  }
  return taps;
}

// out[n,c,y,x] = sum_{r in rows[y]} sum_{s in cols[x]} r.w * s.w * in[n,c,r.i,s.i]
template <typename T>
Tensor<T> separable_resample(const Tensor<T>& x, AxisTaps rows, AxisTaps cols) {
  const std::size_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = rows.size(), ow = cols.size();
  std::vector<T> out(nc * oh * ow, T(0));
  auto in = x.data();
  for (std::size_t p = 0; p < nc; ++p) {
    const T* src = in.data() + p * h * w;
    T* dst = out.data() + p * oh * ow;
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xo = 0; xo < ow; ++xo) {
        T acc = T(0);
        for (const auto& r : rows[y])
          for (const auto& s : cols[xo]) acc += static_cast<T>(r.weight * s.weight) * src[r.index * w + s.index];
        dst[y * ow + xo] = acc;
      }
  }
  return Tensor<T>::make_result(Shape{x.dim(0), x.dim(1), oh, ow}, std::move(out), {x},
                                [rows = std::move(rows), cols = std::move(cols), nc, h, w](::acenet::detail::Node<T>& self) {
                                  auto& g = self.parents[0]->ensure_grad();
                                  const std::size_t oh = rows.size(), ow = cols.size();
                                  for (std::size_t p = 0; p < nc; ++p) {
                                    const T* gy = self.grad.data() + p * oh * ow;
                                    T* gx = g.data() + p * h * w;
                                    for (std::size_t y = 0; y < oh; ++y)
                                      for (std::size_t xo = 0; xo < ow; ++xo) {
                                        const T v = gy[y * ow + xo];
                                        for (const auto& r : rows[y])
                                          for (const auto& s : cols[xo])
                                            gx[r.index * w + s.index] += static_cast<T>(r.weight * s.weight) * v;
                                      }
                                  }
                                });
}

}  // namespace detail

/// Resizes NCHW maps. Bilinear samples at half-pixel centers (clamped at the
/// border); nearest picks floor(o * in / out).
template <typename T>
Tensor<T> upsample(const Tensor<T>& x, std::size_t out_h, std::size_t out_w, UpsampleMode mode = UpsampleMode::kBilinear) {
  if (x.rank() != 4) throw DimensionError("upsample: input must be NCHW, got " + x.shape().str());
  if (out_h == 0 || out_w == 0) throw DimensionError("upsample: target extents must be positive");
  if (out_h == x.dim(2) && out_w == x.dim(3)) return detail::separable_resample(x, detail::nearest_taps(out_h, out_h), detail::nearest_taps(out_w, out_w));
  if (mode == UpsampleMode::kNearest)
    return detail::separable_resample(x, detail::nearest_taps(x.dim(2), out_h), detail::nearest_taps(x.dim(3), out_w));
  return detail::separable_resample(x, detail::bilinear_taps(x.dim(2), out_h), detail::bilinear_taps(x.dim(3), out_w));
}

/// Average pooling onto a fixed out_h x out_w grid of (possibly overlapping) bins.
template <typename T>
Tensor<T> adaptive_avg_pool2d(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
  if (x.rank() != 4) throw DimensionError("adaptive_avg_pool2d: input must be NCHW, got " + x.shape().str());
  if (out_h == 0 || out_w == 0 || out_h > x.dim(2) || out_w > x.dim(3))
    throw ConfigError("adaptive_avg_pool2d: " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                      " bins do not fit input " + x.shape().str());
  return detail::separable_resample(x, detail::adaptive_pool_taps(x.dim(2), out_h), detail::adaptive_pool_taps(x.dim(3), out_w));
}

}  // namespace acenet::nn
