// SPDX-License-Identifier: Apache-2.0
//
// Affinity attention operators.
//
// Local compression (skeleton-guided channel affinity):
//   M  = flatten(GC(S))               [N x HW]
//   P^ = flatten(enc(P))^T            [HW x C]
//   A  = softmax_over_channels(M P^)  [N x C], rows sum to one
//   L_c = (1 + mean_i A[i, c]) * P_c
//
// Global expansion (boundary-guided spatial affinity):
//   P_e, E_e = flatten(enc_p(P)), flatten(enc_e(E))        [D x HW]
//   G[j, i]  = softmax_over_j(P_e[:, j] . E_e[:, i])       [HW x HW], columns sum to one
//   R = K G with K = flatten(enc_k(P))                     [D x HW]
//   X = fuse(concat(P, R))
//
// Every matrix is computed per batch element, so A is [Nb, N, C] and G is
// [Nb, HW, HW].
#pragma once

#include "acenet/nn/blocks.hpp"
#include "acenet/nn/conv.hpp"
#include "acenet/ops.hpp"

namespace acenet {

/// Largest H*W for which the dense spatial affinity is materialized.
inline constexpr std::size_t kMaxAffinityPositions = 1024;

template <typename T>
struct ChannelAffinity {
  Tensor<T> matrix;  // [Nb, N, C]
  std::size_t compression() const { return matrix.dim(1); }
  std::size_t channels() const { return matrix.dim(2); }
};

template <typename T>
struct SpatialAffinity {
  Tensor<T> matrix;  // [Nb, HW, HW]; column i is the distribution over sources j
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t positions() const { return height * width; }
};

template <typename T>
struct LcmParams {
  nn::GCParams<T> gc;          // C -> N
  nn::ConvParams<T> encoder;   // 1x1, C -> C
};

template <typename T>
struct GemParams {
  nn::ConvParams<T> parsing_encoder;   // 1x1, C -> D
  nn::ConvParams<T> boundary_encoder;  // 1x1, C -> D
  nn::ConvParams<T> value_encoder;     // 1x1, C -> D
  nn::ConvParams<T> fuse;              // 1x1, C + D -> C
};

/// [Nb, C, H, W] -> [Nb, C, H*W]
template <typename T>
Tensor<T> flatten_spatial(const Tensor<T>& x) {
  if (x.rank() != 4) throw DimensionError("flatten_spatial: input must be NCHW, got " + x.shape().str());
  return reshape(x, Shape{x.dim(0), x.dim(1), x.dim(2) * x.dim(3)});
}

/// Row-wise softmax of M P^T, with M [Nb, N, HW] and encoded parsing maps [Nb, C, HW].
template <typename T>
ChannelAffinity<T> channel_affinity(const Tensor<T>& m, const Tensor<T>& parsing_encoded) {
  if (m.rank() != 3 || parsing_encoded.rank() != 3 || m.dim(0) != parsing_encoded.dim(0) ||
      m.dim(2) != parsing_encoded.dim(2))
    throw DimensionError(detail::shapes_msg("channel_affinity", m.shape(), parsing_encoded.shape()));
  auto logits = matmul(m, transpose(parsing_encoded));  // [Nb, N, C]
  return {softmax_along(logits, 2)};
}

/// Skeleton-guided channel affinity A from skeleton features S and parsing features P.
template <typename T>
ChannelAffinity<T> lcm_affinity(const Tensor<T>& skeleton, const Tensor<T>& parsing, const LcmParams<T>& p) {
  if (skeleton.rank() != 4 || parsing.rank() != 4 || skeleton.dim(0) != parsing.dim(0) ||
      skeleton.dim(2) != parsing.dim(2) || skeleton.dim(3) != parsing.dim(3))
    throw DimensionError(detail::shapes_msg("lcm_affinity", skeleton.shape(), parsing.shape()));
  auto m = flatten_spatial(nn::gc_block(skeleton, p.gc));
  auto pe = flatten_spatial(nn::conv2d(parsing, p.encoder));
  return channel_affinity(m, pe);
}

/// Residual channel rescaling: out_c = (1 + mean_i A[i, c]) * P_c.
template <typename T>
Tensor<T> lcm_apply(const Tensor<T>& parsing, const ChannelAffinity<T>& a) {
  if (parsing.rank() != 4 || a.matrix.dim(0) != parsing.dim(0) || a.channels() != parsing.dim(1))
    throw DimensionError(detail::shapes_msg("lcm_apply", parsing.shape(), a.matrix.shape()));
  auto weights = mean_along(a.matrix, 1);  // [Nb, C]
  return add(parsing, mul(parsing, weights));
}

template <typename T>
Tensor<T> lcm_forward(const Tensor<T>& skeleton, const Tensor<T>& parsing, const LcmParams<T>& p) {
  return lcm_apply(parsing, lcm_affinity(skeleton, parsing, p));
}

/// Column-stochastic G from encodings [Nb, D, HW]; G[j, i] is softmax over j.
template <typename T>
SpatialAffinity<T> spatial_affinity(const Tensor<T>& parsing_encoded, const Tensor<T>& boundary_encoded, std::size_t height,
                                    std::size_t width) {
  if (!(parsing_encoded.shape() == boundary_encoded.shape()) || parsing_encoded.rank() != 3 ||
      parsing_encoded.dim(2) != height * width)
    throw DimensionError(detail::shapes_msg("spatial_affinity", parsing_encoded.shape(), boundary_encoded.shape()));
  auto logits = matmul(transpose(parsing_encoded), boundary_encoded);  // [Nb, HW_j, HW_i]
  return {softmax_along(logits, 1), height, width};
}

template <typename T>
SpatialAffinity<T> gem_affinity(const Tensor<T>& parsing, const Tensor<T>& boundary, const GemParams<T>& p) {
  if (parsing.rank() != 4 || !(parsing.shape() == boundary.shape()))
    throw DimensionError(detail::shapes_msg("gem_affinity", parsing.shape(), boundary.shape()));
  const std::size_t h = parsing.dim(2), w = parsing.dim(3);
  if (h * w > kMaxAffinityPositions)
    throw ConfigError("gem_affinity: " + std::to_string(h * w) + " positions exceed the dense affinity cap of " +
                      std::to_string(kMaxAffinityPositions));
  auto pe = flatten_spatial(nn::conv2d(parsing, p.parsing_encoder));
  auto ee = flatten_spatial(nn::conv2d(boundary, p.boundary_encoder));
  return spatial_affinity(pe, ee, h, w);
}

/// R = K G for values K [Nb, D, HW].
template <typename T>
Tensor<T> expand(const Tensor<T>& values, const SpatialAffinity<T>& g) {
  if (values.rank() != 3 || values.dim(2) != g.positions() || values.dim(0) != g.matrix.dim(0))
    throw DimensionError(detail::shapes_msg("expand", values.shape(), g.matrix.shape()));
  return matmul(values, g.matrix);
}

/// X = fuse(concat(P, reshape(K G))).
template <typename T>
Tensor<T> gem_apply(const Tensor<T>& parsing, const SpatialAffinity<T>& g, const nn::ConvParams<T>& value_encoder,
                    const nn::ConvParams<T>& fuse) {
  if (parsing.rank() != 4 || parsing.dim(2) != g.height || parsing.dim(3) != g.width)
    throw DimensionError(detail::shapes_msg("gem_apply", parsing.shape(), g.matrix.shape()));
  auto k = flatten_spatial(nn::conv2d(parsing, value_encoder));
  auto r = expand(k, g);
  auto r_map = reshape(r, Shape{parsing.dim(0), k.dim(1), g.height, g.width});
  return nn::conv2d(concat_channels<T>({parsing, r_map}), fuse);
}

template <typename T>
Tensor<T> gem_forward(const Tensor<T>& parsing, const Tensor<T>& boundary, const GemParams<T>& p) {
  return gem_apply(parsing, gem_affinity(parsing, boundary, p), p.value_encoder, p.fuse);
}

}  // namespace acenet
