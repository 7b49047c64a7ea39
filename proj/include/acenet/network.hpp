// SPDX-License-Identifier: Apache-2.0
//
// Toy parsing network: a four-stage conv backbone, a pyramid-pooling parsing
// head, an optional skeleton branch feeding local compression, an optional
// boundary branch feeding global expansion, and a fusion head.
//
//   stage i: conv3x3(stride s_i) + ReLU, conv3x3 + ReLU        -> s1..s4
//   parsing: P = ReLU(conv1x1(concat(up(PPM(s4)), pool(s1))))   at s3 resolution
//            base logits = conv1x1(P)
//   skeleton (LCM on): concat(pool(s1), s2, up(s3), up(s4)) -> shuffle ->
//            conv1x1 + ReLU -> conv3x3 + ReLU -> heatmaps, S
//   boundary (GEM on): per-source conv1x1 reduction of s1..s3, up to s1
//            resolution, concat -> two conv1x1 + ReLU -> 2-way logits, E
//   fusion:  concat(LCM(S, P), GEM(P, E)) (or P alone) -> two conv1x1 + ReLU
//            -> conv1x1 classifier = fine logits
#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "acenet/affinity.hpp"
#include "acenet/config.hpp"
#include "acenet/nn/blocks.hpp"
#include "acenet/nn/params.hpp"

namespace acenet {

template <typename T>
struct NetworkOutputs {
  Tensor<T> base_logits;                      // [B, K, h, w] at parsing resolution
  Tensor<T> fine_logits;                      // [B, K, h, w]
  std::optional<Tensor<T>> boundary_logits;   // [B, 2, H1, W1]
  std::optional<Tensor<T>> heatmaps;          // [B, J, H2, W2]
  std::optional<ChannelAffinity<T>> channel_affinity;
  std::optional<SpatialAffinity<T>> spatial_affinity;
};

template <typename T>
class Network {
 public:
  explicit Network(NetworkConfig cfg, std::uint64_t init_seed = 0) : cfg_(std::move(cfg)) {
    cfg_.validate();
    build();
    initialize(init_seed);
  }

  const NetworkConfig& config() const { return cfg_; }
  nn::ParamStore<T>& params() { return store_; }
  const nn::ParamStore<T>& params() const { return store_; }

  /// He-uniform weights (bound sqrt(6 / fan_in)) from a seeded 64-bit
  /// Mersenne Twister, biases zero. Output heads are drawn at a tenth of that
  /// bound, and the affinity query encoders (`lcm.encoder`,
  /// `gem.parsing_encoder`) start at zero so A and G begin uniform.
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto& [name, t] : store_) {
      auto data = t.mutable_data();
      const bool query = name == "lcm.encoder.weight" || name == "gem.parsing_encoder.weight";
      if (t.rank() == 1 || query) {
        std::fill(data.begin(), data.end(), T(0));
        continue;
      }
      const bool head = name.ends_with("classifier.weight") || name.ends_with("heatmap.weight") || name.ends_with("logits.weight");
      const double fan_in = static_cast<double>(t.dim(1) * t.dim(2) * t.dim(3));
      const double bound = std::sqrt(6.0 / fan_in) * (head ? 0.1 : 1.0);
      for (auto& v : data) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        v = static_cast<T>((2.0 * u - 1.0) * bound);
      }
    }
  }

  NetworkOutputs<T> forward(const Tensor<T>& images) const {
    if (images.rank() != 4 || images.dim(1) != 3) throw DimensionError("network input must be [B, 3, H, W], got " + images.shape().str());
    using nn::conv2d;
    using nn::upsample;
    using nn::adaptive_avg_pool2d;

    std::vector<Tensor<T>> stages;
    Tensor<T> x = images;
    for (const auto& stage : stages_) {
      x = relu(conv2d(relu(conv2d(x, stage[0])), stage[1]));
      stages.push_back(x);
    }
    const auto& s1 = stages[0];
    const auto& s4 = stages[3];
    const std::size_t ph = stages[2].dim(2), pw = stages[2].dim(3);
    for (auto b : cfg_.ppm_bins)
      if (b > s4.dim(2) || b > s4.dim(3))
        throw ConfigError("ppm bin " + std::to_string(b) + " exceeds last-stage resolution " + s4.shape().str());

    NetworkOutputs<T> out;
    auto context = upsample(nn::pyramid_pooling(s4, ppm_), ph, pw);
    auto high_res = adaptive_avg_pool2d(s1, ph, pw);
    auto parsing = relu(conv2d(concat_channels<T>({context, high_res}), parsing_fuse_));
    out.base_logits = conv2d(parsing, base_classifier_);

    std::vector<Tensor<T>> fused;
    if (cfg_.enable_lcm) {
      const std::size_t sh = stages[1].dim(2), sw = stages[1].dim(3);
      std::vector<Tensor<T>> sources;
      for (const auto& s : stages)
        sources.push_back(s.dim(2) > sh ? adaptive_avg_pool2d(s, sh, sw) : upsample(s, sh, sw));
      auto shuffled = nn::channel_shuffle(concat_channels(sources), cfg_.shuffle_groups);
      auto feat = relu(conv2d(relu(conv2d(shuffled, skeleton_in_)), skeleton_mid_));
      out.heatmaps = conv2d(feat, skeleton_heatmap_);
      auto skeleton = relu(conv2d(adaptive_avg_pool2d(feat, ph, pw), skeleton_feature_));
      auto a = lcm_affinity(skeleton, parsing, lcm_);
      out.channel_affinity = a;
      fused.push_back(lcm_apply(parsing, a));
    }
    if (cfg_.enable_gem) {
      const std::size_t bh = s1.dim(2), bw = s1.dim(3);
      std::vector<Tensor<T>> reduced;
      for (std::size_t i = 0; i < boundary_reduce_.size(); ++i)
        reduced.push_back(upsample(relu(conv2d(stages[i], boundary_reduce_[i])), bh, bw));
      auto feat = relu(conv2d(relu(conv2d(concat_channels(reduced), boundary_in_)), boundary_mid_));
      out.boundary_logits = conv2d(feat, boundary_logits_);
      auto boundary = relu(conv2d(adaptive_avg_pool2d(feat, ph, pw), boundary_feature_));
      auto g = gem_affinity(parsing, boundary, gem_);
      out.spatial_affinity = g;
      fused.push_back(gem_apply(parsing, g, gem_.value_encoder, gem_.fuse));
    }
    if (fused.empty()) fused.push_back(parsing);
    auto merged = fused.size() == 1 ? fused[0] : concat_channels(fused);
    auto h = relu(conv2d(relu(conv2d(merged, fusion_a_)), fusion_b_));
    out.fine_logits = conv2d(h, fine_classifier_);
    return out;
  }

 private:
  nn::ConvParams<T> conv(const std::string& name, std::size_t c_in, std::size_t c_out, std::size_t k_h, std::size_t k_w,
                         std::size_t stride = 1) {
    auto p = nn::ConvParams<T>::same(c_in, c_out, k_h, k_w, stride);
    store_.add(name + ".weight", p.weight);
    store_.add(name + ".bias", p.bias);
    return p;
  }

  void build() {
    const auto& w = cfg_.stage_widths;
    const std::size_t c = cfg_.parsing_channels;
    std::size_t in = 3;
    for (std::size_t i = 0; i < 4; ++i) {
      const std::string prefix = "backbone.s" + std::to_string(i + 1);
      stages_.push_back({conv(prefix + ".conv1", in, w[i], 3, 3, cfg_.stage_strides[i]), conv(prefix + ".conv2", w[i], w[i], 3, 3)});
      in = w[i];
    }
    ppm_.bins = cfg_.ppm_bins;
    const std::size_t branch = w[3] / cfg_.ppm_bins.size();
    for (std::size_t b = 0; b < cfg_.ppm_bins.size(); ++b)
      ppm_.branches.push_back(conv("ppm.branch" + std::to_string(b), w[3], branch, 1, 1));
    parsing_fuse_ = conv("parsing.fuse", ppm_.out_channels(w[3]) + w[0], c, 1, 1);
    base_classifier_ = conv("parsing.classifier", c, cfg_.num_classes, 1, 1);

    if (cfg_.enable_lcm) {
      const std::size_t sk = cfg_.skeleton_width;
      skeleton_in_ = conv("skeleton.conv1", cfg_.skeleton_concat_width(), sk, 1, 1);
      skeleton_mid_ = conv("skeleton.conv2", sk, sk, 3, 3);
      skeleton_heatmap_ = conv("skeleton.heatmap", sk, cfg_.num_joints, 1, 1);
      skeleton_feature_ = conv("skeleton.feature", sk, c, 1, 1);
      const std::size_t k = cfg_.gc_kernel, n = cfg_.compression_dim;
      lcm_.gc.k = k;
      lcm_.gc.a_row = conv("lcm.gc.a_row", c, n, 1, k);
      lcm_.gc.a_col = conv("lcm.gc.a_col", n, n, k, 1);
      lcm_.gc.b_col = conv("lcm.gc.b_col", c, n, k, 1);
      lcm_.gc.b_row = conv("lcm.gc.b_row", n, n, 1, k);
      lcm_.encoder = conv("lcm.encoder", c, c, 1, 1);
    }
    if (cfg_.enable_gem) {
      const std::size_t r = cfg_.boundary_reduce, bw = cfg_.boundary_width, d = cfg_.encoding_dim;
      for (std::size_t i = 0; i < 3; ++i)
        boundary_reduce_.push_back(conv("boundary.reduce" + std::to_string(i + 1), w[i], r, 1, 1));
      boundary_in_ = conv("boundary.conv1", 3 * r, bw, 1, 1);
      boundary_mid_ = conv("boundary.conv2", bw, bw, 1, 1);
      boundary_logits_ = conv("boundary.logits", bw, 2, 1, 1);
      boundary_feature_ = conv("boundary.feature", bw, c, 1, 1);
      gem_.parsing_encoder = conv("gem.parsing_encoder", c, d, 1, 1);
      gem_.boundary_encoder = conv("gem.boundary_encoder", c, d, 1, 1);
      gem_.value_encoder = conv("gem.value_encoder", c, d, 1, 1);
      gem_.fuse = conv("gem.fuse", c + d, c, 1, 1);
    }
    const std::size_t branches = (cfg_.enable_lcm ? 1 : 0) + (cfg_.enable_gem ? 1 : 0);
    fusion_a_ = conv("fusion.conv1", c * std::max<std::size_t>(branches, 1), c, 1, 1);
    fusion_b_ = conv("fusion.conv2", c, c, 1, 1);
    fine_classifier_ = conv("fusion.classifier", c, cfg_.num_classes, 1, 1);
  }

  NetworkConfig cfg_;
  nn::ParamStore<T> store_;
  std::vector<std::array<nn::ConvParams<T>, 2>> stages_;
  nn::PyramidPoolingParams<T> ppm_;
  nn::ConvParams<T> parsing_fuse_, base_classifier_;
  nn::ConvParams<T> skeleton_in_, skeleton_mid_, skeleton_heatmap_, skeleton_feature_;
  LcmParams<T> lcm_;
  std::vector<nn::ConvParams<T>> boundary_reduce_;
  nn::ConvParams<T> boundary_in_, boundary_mid_, boundary_logits_, boundary_feature_;
  GemParams<T> gem_;
  nn::ConvParams<T> fusion_a_, fusion_b_, fine_classifier_;
};

}  // namespace acenet
