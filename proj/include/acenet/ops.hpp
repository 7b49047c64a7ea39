// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "acenet/tensor.hpp"

namespace acenet {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

inline std::string shapes_msg(const char* op, const Shape& a, const Shape& b) {
  return std::string(op) + ": incompatible shapes " + a.str() + " and " + b.str();
}

// How `b` maps onto the elements of `a` in a broadcasting binary op.
enum class Broadcast { kSame, kPerChannel, kPerSampleChannel };

inline Broadcast classify_broadcast(const char* op, const Shape& a, const Shape& b) {
  if (a == b) return Broadcast::kSame;
  if (a.rank() >= 2 && b.rank() == 1 && b[0] == a[1]) return Broadcast::kPerChannel;
  if (a.rank() >= 3 && b.rank() == 2 && b[0] == a[0] && b[1] == a[1]) return Broadcast::kPerSampleChannel;
  throw DimensionError(shapes_msg(op, a, b));
}

// Index of the `b` element paired with element i of `a`.
struct BroadcastIndex {
  Broadcast kind;
  std::size_t channels = 1;
  std::size_t inner = 1;
  std::size_t operator()(std::size_t i) const {
    switch (kind) {
      case Broadcast::kSame:
        return i;
      case Broadcast::kPerChannel:
        return (i / inner) % channels;
      case Broadcast::kPerSampleChannel:
        return i / inner;
    }
    return i;
  }
};

inline BroadcastIndex make_broadcast_index(const char* op, const Shape& a, const Shape& b) {
  BroadcastIndex idx{classify_broadcast(op, a, b)};
  if (idx.kind != Broadcast::kSame) {
    idx.channels = a[1];
    for (std::size_t d = 2; d < a.rank(); ++d) idx.inner *= a[d];
  }
  return idx;
}

inline void split_axis(const Shape& s, std::size_t axis, std::size_t& outer, std::size_t& len, std::size_t& inner) {
  outer = 1;
  inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  len = s[axis];
  for (std::size_t d = axis + 1; d < s.rank(); ++d) inner *= s[d];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

/// a + b; b may equal a's shape, be a per-channel [C] vector, or a per-sample
/// per-channel [N, C] matrix broadcast over the trailing axes.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  const auto idx = detail::make_broadcast_index("add", a.shape(), b.shape());
  std::vector<T> out(a.numel());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[idx(i)];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [idx](detail::Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[idx(i)] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  const auto idx = detail::make_broadcast_index("sub", a.shape(), b.shape());
  std::vector<T> out(a.numel());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[idx(i)];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [idx](detail::Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[idx(i)] -= self.grad[i];
    }
  });
}

/// Elementwise product with the same broadcasting rules as `add`.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  const auto idx = detail::make_broadcast_index("mul", a.shape(), b.shape());
  std::vector<T> out(a.numel());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[idx(i)];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [idx](detail::Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.data[idx(i)];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[idx(i)] += self.grad[i] * pa.data[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= s;
  return Tensor<T>::make_result(a.shape(), std::move(out), {a}, [s](detail::Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v += s;
  return Tensor<T>::make_result(a.shape(), std::move(out), {a}, [](detail::Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  return Tensor<T>::make_result(a.shape(), std::move(out), {a}, [](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (p.data[i] > T(0)) g[i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = T(0);
  for (T v : a.data()) acc += v;
  return Tensor<T>::make_result(Shape{1}, {acc}, {a}, [](detail::Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

/// Mean over one axis; the axis is removed (a rank-1 input yields shape [1]).
template <typename T>
Tensor<T> mean_along(const Tensor<T>& a, std::size_t axis) {
  if (axis >= a.rank()) throw DimensionError("mean_along: axis " + std::to_string(axis) + " out of range for " + a.shape().str());
  std::size_t outer, len, inner;
  detail::split_axis(a.shape(), axis, outer, len, inner);
  std::vector<std::size_t> dims;
  for (std::size_t d = 0; d < a.rank(); ++d)
    if (d != axis) dims.push_back(a.dim(d));
  if (dims.empty()) dims.push_back(1);
  std::vector<T> out(outer * inner, T(0));
  auto x = a.data();
  const T inv = T(1) / static_cast<T>(len);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < len; ++k)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += x[(o * len + k) * inner + i];
  for (auto& v : out) v *= inv;
  return Tensor<T>::make_result(Shape(dims), std::move(out), {a}, [outer, len, inner, inv](detail::Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t k = 0; k < len; ++k)
        for (std::size_t i = 0; i < inner; ++i) g[(o * len + k) * inner + i] += inv * self.grad[o * inner + i];
  });
}

// ---------------------------------------------------------------------------
// Layout

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape.numel() != a.numel())
    throw DimensionError("reshape: element count of " + a.shape().str() + " differs from " + shape.str());
  std::vector<T> out(a.data().begin(), a.data().end());
  return Tensor<T>::make_result(shape, std::move(out), {a}, [](detail::Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

/// Reorders axes: output axis d is input axis order[d].
template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<std::size_t>& order) {
  const std::size_t r = a.rank();
  if (order.size() != r) throw DimensionError("permute: axis order length does not match rank of " + a.shape().str());
  std::vector<bool> used(r, false);
  for (auto d : order) {
    if (d >= r || used[d]) throw DimensionError("permute: axis order is not a permutation");
    used[d] = true;
  }
  std::array<std::size_t, 4> in_stride{}, out_dims{1, 1, 1, 1}, src_stride{};
  std::size_t s = 1;
  for (std::size_t d = r; d-- > 0;) {
    in_stride[d] = s;
    s *= a.dim(d);
  }
  std::vector<std::size_t> dims(r);
  for (std::size_t d = 0; d < r; ++d) {
    dims[d] = a.dim(order[d]);
    out_dims[d + (4 - r)] = dims[d];
    src_stride[d + (4 - r)] = in_stride[order[d]];
  }
  // Output index -> input index table, reused by the adjoint.
  std::vector<std::size_t> src(a.numel());
  std::size_t i = 0;
  for (std::size_t d0 = 0; d0 < out_dims[0]; ++d0)
    for (std::size_t d1 = 0; d1 < out_dims[1]; ++d1)
      for (std::size_t d2 = 0; d2 < out_dims[2]; ++d2)
        for (std::size_t d3 = 0; d3 < out_dims[3]; ++d3)
          src[i++] = d0 * src_stride[0] + d1 * src_stride[1] + d2 * src_stride[2] + d3 * src_stride[3];
  std::vector<T> out(a.numel());
  auto x = a.data();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = x[src[k]];
  return Tensor<T>::make_result(Shape(dims), std::move(out), {a}, [src = std::move(src)](detail::Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t k = 0; k < src.size(); ++k) g[src[k]] += self.grad[k];
  });
}

/// Swaps the last two axes.
template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() < 2) throw DimensionError("transpose: needs rank >= 2, got " + a.shape().str());
  std::vector<std::size_t> order(a.rank());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::swap(order[a.rank() - 1], order[a.rank() - 2]);
  return permute(a, order);
}

/// Stacks rank-4 maps (or rank >= 2 tensors) along axis 1.
template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_channels: no inputs");
  const Shape& s0 = parts[0].shape();
  if (s0.rank() < 2) throw DimensionError("concat_channels: inputs need rank >= 2");
  std::size_t inner = 1;
  for (std::size_t d = 2; d < s0.rank(); ++d) inner *= s0[d];
  std::size_t total_c = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.rank() == s0.rank() && s[0] == s0[0];
    for (std::size_t d = 2; ok && d < s.rank(); ++d) ok = s[d] == s0[d];
    if (!ok) throw DimensionError(detail::shapes_msg("concat_channels", s0, s));
    offsets.push_back(total_c);
    total_c += s[1];
  }
  const std::size_t batch = s0[0];
  Shape out_shape = s0;
  out_shape[1] = total_c;
  std::vector<T> out(out_shape.numel());
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t c = parts[k].dim(1);
    auto x = parts[k].data();
    for (std::size_t n = 0; n < batch; ++n)
      std::copy_n(x.begin() + n * c * inner, c * inner, out.begin() + (n * total_c + offsets[k]) * inner);
  }
  return Tensor<T>::make_result(out_shape, std::move(out), parts, [offsets, batch, inner, total_c](detail::Node<T>& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      auto& p = *self.parents[k];
      if (!p.requires_grad) continue;
      const std::size_t c = p.shape[1];
      auto& g = p.ensure_grad();
      for (std::size_t n = 0; n < batch; ++n) {
        const T* src = self.grad.data() + (n * total_c + offsets[k]) * inner;
        T* dst = g.data() + n * c * inner;
        for (std::size_t i = 0; i < c * inner; ++i) dst[i] += src[i];
      }
    }
  });
}

/// Channels [begin, end) of a rank >= 2 tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& a, std::size_t begin, std::size_t end) {
  if (a.rank() < 2 || begin >= end || end > a.dim(1))
    throw DimensionError("slice_channels: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for " +
                         a.shape().str());
  std::size_t inner = 1;
  for (std::size_t d = 2; d < a.rank(); ++d) inner *= a.dim(d);
  const std::size_t batch = a.dim(0), c_in = a.dim(1), c_out = end - begin;
  Shape out_shape = a.shape();
  out_shape[1] = c_out;
  std::vector<T> out(out_shape.numel());
  auto x = a.data();
  for (std::size_t n = 0; n < batch; ++n)
    std::copy_n(x.begin() + (n * c_in + begin) * inner, c_out * inner, out.begin() + n * c_out * inner);
  return Tensor<T>::make_result(out_shape, std::move(out), {a}, [=](detail::Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t i = 0; i < c_out * inner; ++i) g[(n * c_in + begin) * inner + i] += self.grad[n * c_out * inner + i];
  });
}

/// Output channel k is input channel src_channel[k] (a gather along axis 1).
template <typename T>
Tensor<T> gather_channels(const Tensor<T>& a, const std::vector<std::size_t>& src_channel) {
  if (a.rank() < 2) throw DimensionError("gather_channels: needs rank >= 2");
  std::size_t inner = 1;
  for (std::size_t d = 2; d < a.rank(); ++d) inner *= a.dim(d);
  const std::size_t batch = a.dim(0), c_in = a.dim(1), c_out = src_channel.size();
  for (auto c : src_channel)
    if (c >= c_in) throw DimensionError("gather_channels: channel index out of range");
  Shape out_shape = a.shape();
  out_shape[1] = c_out;
  std::vector<T> out(out_shape.numel());
  auto x = a.data();
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t k = 0; k < c_out; ++k)
      std::copy_n(x.begin() + (n * c_in + src_channel[k]) * inner, inner, out.begin() + (n * c_out + k) * inner);
  return Tensor<T>::make_result(out_shape, std::move(out), {a}, [=](detail::Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t k = 0; k < c_out; ++k)
        for (std::size_t i = 0; i < inner; ++i)
          g[(n * c_in + src_channel[k]) * inner + i] += self.grad[(n * c_out + k) * inner + i];
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

/// [M,K]x[K,J] -> [M,J], or batched [B,M,K]x[B,K,J] -> [B,M,J].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const bool batched = sa.rank() == 3;
  if (!((sa.rank() == 2 && sb.rank() == 2) || (sa.rank() == 3 && sb.rank() == 3 && sa[0] == sb[0])) ||
      sa[sa.rank() - 1] != sb[sb.rank() - 2])
    throw DimensionError(detail::shapes_msg("matmul", sa, sb));
  const std::size_t batch = batched ? sa[0] : 1;
  const std::size_t m = sa[sa.rank() - 2], k = sa[sa.rank() - 1], j = sb[sb.rank() - 1];
  Shape out_shape = batched ? Shape{batch, m, j} : Shape{m, j};
  std::vector<T> out(batch * m * j);
  for (std::size_t n = 0; n < batch; ++n) {
    detail::CMapMat<T> ma(a.data().data() + n * m * k, m, k);
    detail::CMapMat<T> mb(b.data().data() + n * k * j, k, j);
    detail::MapMat<T> mc(out.data() + n * m * j, m, j);
    mc.noalias() = ma * mb;
  }
  return Tensor<T>::make_result(out_shape, std::move(out), {a, b}, [=](detail::Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    for (std::size_t n = 0; n < batch; ++n) {
      detail::CMapMat<T> gc(self.grad.data() + n * m * j, m, j);
      if (pa.requires_grad) {
        detail::MapMat<T> ga(pa.ensure_grad().data() + n * m * k, m, k);
        detail::CMapMat<T> mb(pb.data.data() + n * k * j, k, j);
        ga.noalias() += gc * mb.transpose();
      }
      if (pb.requires_grad) {
        detail::MapMat<T> gb(pb.ensure_grad().data() + n * k * j, k, j);
        detail::CMapMat<T> ma(pa.data.data() + n * m * k, m, k);
        gb.noalias() += ma.transpose() * gc;
      }
    }
  });
}

/// Numerically stable softmax; every slice along `axis` sums to one.
template <typename T>
Tensor<T> softmax_along(const Tensor<T>& a, std::size_t axis) {
  if (axis >= a.rank()) throw DimensionError("softmax_along: axis out of range for " + a.shape().str());
  std::size_t outer, len, inner;
  detail::split_axis(a.shape(), axis, outer, len, inner);
  std::vector<T> out(a.numel());
  auto x = a.data();
  // Exponentials and the normalizer are formed in double so that a float
  // result is the correctly rounded probability and slices sum to 1 closely.
  std::vector<double> e(len);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, static_cast<double>(x[base + k * inner]));
      double z = 0.0;
      for (std::size_t k = 0; k < len; ++k) z += (e[k] = std::exp(static_cast<double>(x[base + k * inner]) - mx));
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] = static_cast<T>(e[k] / z);
    }
  return Tensor<T>::make_result(a.shape(), std::move(out), {a}, [outer, len, inner](detail::Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    const auto& y = self.data;
    const auto& gy = self.grad;
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = o * len * inner + i;
        T dot = T(0);
        for (std::size_t k = 0; k < len; ++k) dot += gy[base + k * inner] * y[base + k * inner];
        for (std::size_t k = 0; k < len; ++k) g[base + k * inner] += y[base + k * inner] * (gy[base + k * inner] - dot);
      }
  });
}

}  // namespace acenet
