// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <numeric>
#include <vector>

#include "acenet/nn/conv.hpp"
#include "acenet/nn/resample.hpp"

namespace acenet::nn {

/// Large-kernel block: path A is (1 x k then k x 1), path B is (k x 1 then
/// 1 x k), both mapping C -> N; the block returns their sum.
template <typename T>
struct GCParams {
  ConvParams<T> a_row;  // 1 x k, C -> N
  ConvParams<T> a_col;  // k x 1, N -> N
  ConvParams<T> b_col;  // k x 1, C -> N
  ConvParams<T> b_row;  // 1 x k, N -> N
  std::size_t k = 7;

  static GCParams create(std::size_t in_channels, std::size_t out_channels, std::size_t k, bool requires_grad = true) {
    if (k % 2 == 0 || k == 0) throw ConfigError("GC block kernel extent must be odd, got " + std::to_string(k));
    GCParams p;
    p.k = k;
    p.a_row = ConvParams<T>::same(in_channels, out_channels, 1, k, 1, requires_grad);
    p.a_col = ConvParams<T>::same(out_channels, out_channels, k, 1, 1, requires_grad);
    p.b_col = ConvParams<T>::same(in_channels, out_channels, k, 1, 1, requires_grad);
    p.b_row = ConvParams<T>::same(out_channels, out_channels, 1, k, 1, requires_grad);
    return p;
  }

  std::size_t out_channels() const { return a_row.out_channels(); }
};

template <typename T>
Tensor<T> gc_block(const Tensor<T>& x, const GCParams<T>& p) {
  if (p.k % 2 == 0) throw ConfigError("GC block kernel extent must be odd, got " + std::to_string(p.k));
  auto a = conv2d(conv2d(x, p.a_row), p.a_col);
  auto b = conv2d(conv2d(x, p.b_col), p.b_row);
  return add(a, b);
}

/// Per-bin 1x1 projections of a pyramid pooling module.
template <typename T>
struct PyramidPoolingParams {
  std::vector<std::size_t> bins;
  std::vector<ConvParams<T>> branches;  // one 1x1 conv C -> C / bins.size() per bin

  static PyramidPoolingParams create(std::size_t channels, std::vector<std::size_t> bins, bool requires_grad = true) {
    if (bins.empty()) throw ConfigError("pyramid pooling needs at least one bin");
    const std::size_t width = channels / bins.size();
    if (width == 0) throw ConfigError("pyramid pooling: more bins than input channels");
    PyramidPoolingParams p;
    p.bins = std::move(bins);
    for (std::size_t i = 0; i < p.bins.size(); ++i)
      p.branches.push_back(ConvParams<T>::same(channels, width, 1, 1, 1, requires_grad));
    return p;
  }

  std::size_t out_channels(std::size_t in_channels) const {
    return in_channels + bins.size() * (branches.empty() ? 0 : branches[0].out_channels());
  }
};

/// concat(x, up(conv1x1(pool_b(x))) for each bin b) along channels.
template <typename T>
Tensor<T> pyramid_pooling(const Tensor<T>& x, const PyramidPoolingParams<T>& p) {
  if (x.rank() != 4) throw DimensionError("pyramid_pooling: input must be NCHW, got " + x.shape().str());
  if (p.bins.size() != p.branches.size()) throw ConfigError("pyramid pooling: bins and branches disagree");
  std::vector<Tensor<T>> parts{x};
  for (std::size_t i = 0; i < p.bins.size(); ++i) {
    const std::size_t b = p.bins[i];
    if (b == 0 || b > x.dim(2) || b > x.dim(3))
      throw ConfigError("pyramid pooling: bin " + std::to_string(b) + " exceeds input " + x.shape().str());
    auto pooled = conv2d(adaptive_avg_pool2d(x, b, b), p.branches[i]);
    parts.push_back(upsample(pooled, x.dim(2), x.dim(3), UpsampleMode::kBilinear));
  }
  return concat_channels(parts);
}

/// Destination channel of source channel c under a g-group shuffle.
inline std::size_t shuffled_position(std::size_t c, std::size_t channels, std::size_t groups) {
  return (c % groups) * (channels / groups) + c / groups;
}

/// Pure channel permutation: channel c moves to (c mod g) * (C/g) + floor(c/g).
template <typename T>
Tensor<T> channel_shuffle(const Tensor<T>& x, std::size_t groups) {
  if (x.rank() < 2) throw DimensionError("channel_shuffle: needs rank >= 2");
  const std::size_t channels = x.dim(1);
  if (groups == 0 || channels % groups != 0)
    throw ConfigError("channel_shuffle: " + std::to_string(groups) + " groups do not divide " + std::to_string(channels) +
                      " channels");
  std::vector<std::size_t> src(channels);
  for (std::size_t c = 0; c < channels; ++c) src[shuffled_position(c, channels, groups)] = c;
  return gather_channels(x, src);
}

}  // namespace acenet::nn
