// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <functional>
#include <limits>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "acenet/ops.hpp"

namespace acenet {

inline constexpr int kIgnoreIndex = 255;

/// Per-pixel class ids, [N, H, W].
struct LabelMap {
  std::size_t batch = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t num_classes = 0;
  int ignore_index = kIgnoreIndex;
  std::vector<int> labels;

  LabelMap() = default;
  LabelMap(std::size_t n, std::size_t h, std::size_t w, std::size_t k, int fill = 0)
      : batch(n), height(h), width(w), num_classes(k), labels(n * h * w, fill) {}

  std::size_t pixels() const { return labels.size(); }
  int& at(std::size_t n, std::size_t y, std::size_t x) { return labels[(n * height + y) * width + x]; }
  int at(std::size_t n, std::size_t y, std::size_t x) const { return labels[(n * height + y) * width + x]; }
  bool ignored(std::size_t i) const { return labels[i] == ignore_index; }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

enum class BoundaryWeightMode { kInverseFrequency, kFixed };

/// Weights of the multi-task objective and the loss-specific knobs.
struct LossWeights {
  double alpha = 1.0;   // boundary loss
  double beta = 40.0;   // skeleton heatmap loss
  double ohem_keep_fraction = 0.25;
  std::size_t ohem_min_kept = 64;
  BoundaryWeightMode boundary_weight_mode = BoundaryWeightMode::kInverseFrequency;
  double boundary_pos_weight = 1.0;  // fixed mode, and the fallback when no boundary pixel exists

  void validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ConfigError("loss weights alpha and beta must be >= 0");
    if (!(ohem_keep_fraction > 0.0 && ohem_keep_fraction <= 1.0))
      throw ConfigError("ohem_keep_fraction must lie in (0, 1]");
    if (ohem_min_kept < 1) throw ConfigError("ohem_min_kept must be >= 1");
    if (!(boundary_pos_weight > 0.0)) throw ConfigError("boundary_pos_weight must be > 0");
  }
};

namespace detail {

inline void check_logits_target(const char* op, const Shape& logits, const LabelMap& target) {
  if (logits.rank() != 4 || logits[0] != target.batch || logits[2] != target.height || logits[3] != target.width)
    throw DimensionError(std::string(op) + ": logits " + logits.str() + " do not match target [" +
                         std::to_string(target.batch) + "x" + std::to_string(target.height) + "x" +
                         std::to_string(target.width) + "]");
  const std::size_t k = logits[1];
  for (int v : target.labels)
    if (v != target.ignore_index && (v < 0 || static_cast<std::size_t>(v) >= k))
      throw DataError(std::string(op) + ": target id " + std::to_string(v) + " outside [0, " + std::to_string(k) + ")");
}

// -log softmax(logits)[target] per pixel; ignored pixels get NaN.
template <typename T>
std::vector<double> pixel_nll(const Tensor<T>& logits, const LabelMap& target) {
  const std::size_t k = logits.dim(1), plane = logits.dim(2) * logits.dim(3);
  std::vector<double> out(target.pixels());
  auto x = logits.data();
  for (std::size_t n = 0; n < target.batch; ++n)
    for (std::size_t p = 0; p < plane; ++p) {
      const std::size_t i = n * plane + p;
      if (target.ignored(i)) {
        out[i] = std::nan("");
        continue;
      }
      const T* base = x.data() + n * k * plane + p;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, static_cast<double>(base[c * plane]));
      double z = 0.0;
      for (std::size_t c = 0; c < k; ++c) z += std::exp(static_cast<double>(base[c * plane]) - mx);
      out[i] = std::log(z) + mx - static_cast<double>(base[target.labels[i] * plane]);
    }
  return out;
}

// sum_p w_p * nll_p / normalizer, differentiable in the logits.
template <typename T>
Tensor<T> weighted_pixel_ce(const Tensor<T>& logits, const LabelMap& target, const std::vector<double>& nll,
                            std::vector<double> weights, double normalizer) {
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i)
    if (weights[i] != 0.0) acc += weights[i] * nll[i];
  const double loss = normalizer > 0.0 ? acc / normalizer : 0.0;
  const std::size_t k = logits.dim(1), plane = logits.dim(2) * logits.dim(3);
  std::vector<int> labels = target.labels;
  return Tensor<T>::make_result(
      Shape{1}, {static_cast<T>(loss)}, {logits},
      [weights = std::move(weights), labels = std::move(labels), normalizer, k, plane](Node<T>& self) {
        if (!(normalizer > 0.0)) return;
        auto& p = *self.parents[0];
        auto& g = p.ensure_grad();
        const double upstream = static_cast<double>(self.grad[0]) / normalizer;
        std::vector<double> prob(k);
        for (std::size_t i = 0; i < weights.size(); ++i) {
          if (weights[i] == 0.0) continue;
          const std::size_t n = i / plane, px = i % plane;
          const T* base = p.data.data() + n * k * plane + px;
          double mx = -std::numeric_limits<double>::infinity();
          for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, static_cast<double>(base[c * plane]));
          double z = 0.0;
          for (std::size_t c = 0; c < k; ++c) z += (prob[c] = std::exp(static_cast<double>(base[c * plane]) - mx));
          const double s = upstream * weights[i];
          T* gb = g.data() + n * k * plane + px;
          for (std::size_t c = 0; c < k; ++c) {
            const double d = prob[c] / z - (static_cast<int>(c) == labels[i] ? 1.0 : 0.0);
            gb[c * plane] += static_cast<T>(s * d);
          }
        }
      });
}

}  // namespace detail

/// Mean over non-ignored pixels of -log softmax(logits)[target].
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const LabelMap& target) {
  detail::check_logits_target("cross_entropy", logits.shape(), target);
  auto nll = detail::pixel_nll(logits, target);
  std::vector<double> w(nll.size(), 0.0);
  double valid = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i)
    if (!target.ignored(i)) {
      w[i] = 1.0;
      valid += 1.0;
    }
  return detail::weighted_pixel_ce(logits, target, nll, std::move(w), valid);
}

/// Number of pixels OHEM must retain out of `valid`.
inline std::size_t ohem_quota(std::size_t valid, const LossWeights& w) {
  const auto by_fraction = static_cast<std::size_t>(std::ceil(w.ohem_keep_fraction * static_cast<double>(valid)));
  return std::min(valid, std::max(w.ohem_min_kept, by_fraction));
}

/// Cross entropy averaged over the hardest pixels only. Every pixel whose loss
/// ties the quota threshold is kept, so the kept set may exceed the quota.
template <typename T>
Tensor<T> ohem_cross_entropy(const Tensor<T>& logits, const LabelMap& target, const LossWeights& lw) {
  detail::check_logits_target("ohem_cross_entropy", logits.shape(), target);
  auto nll = detail::pixel_nll(logits, target);
  std::vector<double> valid_losses;
  for (std::size_t i = 0; i < nll.size(); ++i)
    if (!target.ignored(i)) valid_losses.push_back(nll[i]);
  const std::size_t quota = ohem_quota(valid_losses.size(), lw);
  double threshold = -std::numeric_limits<double>::infinity();
  if (quota > 0 && quota < valid_losses.size()) {
    auto nth = valid_losses.begin() + static_cast<std::ptrdiff_t>(quota - 1);
    std::nth_element(valid_losses.begin(), nth, valid_losses.end(), std::greater<double>());
    threshold = *nth;
  }
  std::vector<double> w(nll.size(), 0.0);
  double kept = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i)
    if (!target.ignored(i) && nll[i] >= threshold) {
      w[i] = 1.0;
      kept += 1.0;
    }
  return detail::weighted_pixel_ce(logits, target, nll, std::move(w), kept);
}

/// Per-class weights used by boundary_ce for this batch: {background, boundary}.
inline std::array<double, 2> boundary_class_weights(const LabelMap& target, const LossWeights& lw) {
  double count[2] = {0.0, 0.0};
  for (std::size_t i = 0; i < target.pixels(); ++i)
    if (!target.ignored(i)) count[target.labels[i] == 1 ? 1 : 0] += 1.0;
  const double total = count[0] + count[1];
  if (lw.boundary_weight_mode == BoundaryWeightMode::kFixed || count[1] == 0.0)
    return {1.0, lw.boundary_pos_weight};
  return {count[0] > 0.0 ? total / (2.0 * count[0]) : 0.0, total / (2.0 * count[1])};
}

/// Class-weighted two-way cross entropy, normalized by the summed pixel weights.
/// Inverse-frequency weights are total / (2 * count_c); with no boundary pixel
/// in the batch the fixed weights are used instead.
template <typename T>
Tensor<T> boundary_ce(const Tensor<T>& logits, const LabelMap& target, const LossWeights& lw) {
  if (logits.rank() != 4 || logits.dim(1) != 2)
    throw DimensionError("boundary_ce: expects 2-channel logits, got " + logits.shape().str());
  detail::check_logits_target("boundary_ce", logits.shape(), target);
  const auto cw = boundary_class_weights(target, lw);
  auto nll = detail::pixel_nll(logits, target);
  std::vector<double> w(nll.size(), 0.0);
  double norm = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i)
    if (!target.ignored(i)) {
      w[i] = cw[target.labels[i] == 1 ? 1 : 0];
      norm += w[i];
    }
  return detail::weighted_pixel_ce(logits, target, nll, std::move(w), norm);
}

/// Mean squared error over every element.
template <typename T>
Tensor<T> skeleton_mse(const Tensor<T>& pred, const Tensor<T>& gt) {
  if (!(pred.shape() == gt.shape())) throw DimensionError(detail::shapes_msg("skeleton_mse", pred.shape(), gt.shape()));
  auto d = sub(pred, gt);
  return mean(mul(d, d));
}

template <typename T>
struct LossTargets {
  LabelMap labels;
  LabelMap boundary;
  Tensor<T> heatmaps;  // [N, J, H, W]
};

/// Network outputs at label resolution. Branch outputs are absent when the
/// corresponding branch is not built.
template <typename T>
struct LossInputs {
  Tensor<T> base_logits;
  Tensor<T> fine_logits;
  std::optional<Tensor<T>> boundary_logits;
  std::optional<Tensor<T>> skeleton_pred;
};

template <typename T>
struct LossTerms {
  Tensor<T> total;
  double base = 0.0;
  double fine = 0.0;
  double boundary = 0.0;
  double skeleton = 0.0;
};

/// L = CE(base) + OHEM-CE(fine) + alpha * L_bd + beta * L_ske.
template <typename T>
LossTerms<T> total_loss(const LossInputs<T>& in, const LossTargets<T>& tg, const LossWeights& lw) {
  lw.validate();
  LossTerms<T> out;
  auto base = cross_entropy(in.base_logits, tg.labels);
  auto fine = ohem_cross_entropy(in.fine_logits, tg.labels, lw);
  out.base = base.item();
  out.fine = fine.item();
  auto total = add(base, fine);
  if (in.boundary_logits) {
    auto bd = boundary_ce(*in.boundary_logits, tg.boundary, lw);
    out.boundary = bd.item();
    total = add(total, scale(bd, static_cast<T>(lw.alpha)));
  }
  if (in.skeleton_pred) {
    auto ske = skeleton_mse(*in.skeleton_pred, tg.heatmaps);
    out.skeleton = ske.item();
    total = add(total, scale(ske, static_cast<T>(lw.beta)));
  }
  out.total = total;
  return out;
}

}  // namespace acenet
