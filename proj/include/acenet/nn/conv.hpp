// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "acenet/ops.hpp"

namespace acenet::nn {

/// Weights and geometry of a 2-D convolution. Weight is [C_out, C_in, k_h, k_w].
template <typename T>
struct ConvParams {
  Tensor<T> weight;
  Tensor<T> bias;  // [C_out]
  std::size_t stride = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
  std::size_t dilation = 1;

  /// Zero-filled parameters that keep H x W when stride is 1 and the kernel is odd.
  static ConvParams same(std::size_t c_in, std::size_t c_out, std::size_t k_h, std::size_t k_w, std::size_t stride = 1,
                         bool requires_grad = true) {
    ConvParams p;
    p.weight = Tensor<T>::zeros(Shape{c_out, c_in, k_h, k_w}, requires_grad);
    p.bias = Tensor<T>::zeros(Shape{c_out}, requires_grad);
    p.stride = stride;
    p.pad_h = k_h / 2;
    p.pad_w = k_w / 2;
    return p;
  }

  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }
  std::size_t kernel_h() const { return weight.dim(2); }
  std::size_t kernel_w() const { return weight.dim(3); }
};

namespace detail {

struct ConvGeometry {
  std::size_t batch, c_in, h, w, c_out, kh, kw, stride, ph, pw, dil, ho, wo;
  std::size_t patch() const { return c_in * kh * kw; }
  std::size_t pixels() const { return ho * wo; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && ph == 0 && pw == 0; }
};

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  for (std::size_t c = 0; c < g.c_in; ++c)
    for (std::size_t ki = 0; ki < g.kh; ++ki)
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        T* row = col + ((c * g.kh + ki) * g.kw + kj) * g.pixels();
        const T* plane = x + c * g.h * g.w;
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki * g.dil) - static_cast<long>(g.ph);
          T* dst = row + oh * g.wo;
          if (ih < 0 || ih >= static_cast<long>(g.h)) {
            std::fill_n(dst, g.wo, T(0));
            continue;
          }
          const T* src = plane + ih * g.w;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj * g.dil) - static_cast<long>(g.pw);
            dst[ow] = (iw < 0 || iw >= static_cast<long>(g.w)) ? T(0) : src[iw];
          }
        }
      }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* x) {
  for (std::size_t c = 0; c < g.c_in; ++c)
    for (std::size_t ki = 0; ki < g.kh; ++ki)
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const T* row = col + ((c * g.kh + ki) * g.kw + kj) * g.pixels();
        T* plane = x + c * g.h * g.w;
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki * g.dil) - static_cast<long>(g.ph);
          if (ih < 0 || ih >= static_cast<long>(g.h)) continue;
          const T* src = row + oh * g.wo;
          T* dst = plane + ih * g.w;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj * g.dil) - static_cast<long>(g.pw);
            if (iw >= 0 && iw < static_cast<long>(g.w)) dst[iw] += src[ow];
          }
        }
      }
}

}  // namespace detail

/// Cross-correlation over NCHW input with zero padding, stride and dilation.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvParams<T>& p) {
  if (x.rank() != 4) throw DimensionError("conv2d: input must be NCHW, got " + x.shape().str());
  if (p.weight.rank() != 4 || p.weight.dim(1) != x.dim(1))
    throw DimensionError(::acenet::detail::shapes_msg("conv2d", x.shape(), p.weight.shape()));
  if (p.bias.rank() != 1 || p.bias.dim(0) != p.weight.dim(0))
    throw DimensionError(::acenet::detail::shapes_msg("conv2d bias", p.weight.shape(), p.bias.shape()));
  if (p.stride == 0 || p.dilation == 0) throw ConfigError("conv2d: stride and dilation must be positive");

  detail::ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), p.weight.dim(0), p.weight.dim(2), p.weight.dim(3),
                         p.stride, p.pad_h, p.pad_w, p.dilation, 0, 0};
  const long span_h = static_cast<long>(g.h + 2 * g.ph) - static_cast<long>(g.dil * (g.kh - 1) + 1);
  const long span_w = static_cast<long>(g.w + 2 * g.pw) - static_cast<long>(g.dil * (g.kw - 1) + 1);
  if (span_h < 0 || span_w < 0) throw DimensionError("conv2d: kernel larger than padded input " + x.shape().str());
  g.ho = static_cast<std::size_t>(span_h) / g.stride + 1;
  g.wo = static_cast<std::size_t>(span_w) / g.stride + 1;

  const std::size_t in_plane = g.c_in * g.h * g.w;
  const std::size_t out_plane = g.c_out * g.pixels();
  std::vector<T> out(g.batch * out_plane);
  std::vector<T> col(g.pointwise() ? 0 : g.patch() * g.pixels());
  ::acenet::detail::CMapMat<T> wm(p.weight.data().data(), g.c_out, g.patch());
  auto bias = p.bias.data();
  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* xn = x.data().data() + n * in_plane;
    if (!g.pointwise()) detail::im2col(xn, g, col.data());
    ::acenet::detail::CMapMat<T> cm(g.pointwise() ? xn : col.data(), g.patch(), g.pixels());
    ::acenet::detail::MapMat<T> om(out.data() + n * out_plane, g.c_out, g.pixels());
    om.noalias() = wm * cm;
    for (std::size_t c = 0; c < g.c_out; ++c) om.row(c).array() += bias[c];
  }

  Shape out_shape{g.batch, g.c_out, g.ho, g.wo};
  return Tensor<T>::make_result(out_shape, std::move(out), {x, p.weight, p.bias}, [g](::acenet::detail::Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    auto& pb = *self.parents[2];
    const std::size_t in_plane = g.c_in * g.h * g.w;
    const std::size_t out_plane = g.c_out * g.pixels();
    std::vector<T> col(g.pointwise() ? 0 : g.patch() * g.pixels());
    std::vector<T> dcol(px.requires_grad && !g.pointwise() ? g.patch() * g.pixels() : 0);
    ::acenet::detail::CMapMat<T> wm(pw.data.data(), g.c_out, g.patch());
    for (std::size_t n = 0; n < g.batch; ++n) {
      ::acenet::detail::CMapMat<T> gm(self.grad.data() + n * out_plane, g.c_out, g.pixels());
      const T* xn = px.data.data() + n * in_plane;
      if (pw.requires_grad) {
        if (!g.pointwise()) detail::im2col(xn, g, col.data());
        ::acenet::detail::CMapMat<T> cm(g.pointwise() ? xn : col.data(), g.patch(), g.pixels());
        ::acenet::detail::MapMat<T> gw(pw.ensure_grad().data(), g.c_out, g.patch());
        gw.noalias() += gm * cm.transpose();
      }
      if (pb.requires_grad) {
        auto& gb = pb.ensure_grad();
        const T* gp = self.grad.data() + n * out_plane;
        for (std::size_t c = 0; c < g.c_out; ++c) {
          T acc = 0;
          for (std::size_t i = 0; i < g.pixels(); ++i) acc += gp[c * g.pixels() + i];
          gb[c] += acc;
        }
      }
      if (px.requires_grad) {
        T* gx = px.ensure_grad().data() + n * in_plane;
        if (g.pointwise()) {
          ::acenet::detail::MapMat<T> gxm(gx, g.c_in, g.pixels());
          gxm.noalias() += wm.transpose() * gm;
        } else {
          ::acenet::detail::MapMat<T> dm(dcol.data(), g.patch(), g.pixels());
          dm.noalias() = wm.transpose() * gm;
          detail::col2im_add(dcol.data(), g, gx);
        }
      }
    }
  });
}

}  // namespace acenet::nn
