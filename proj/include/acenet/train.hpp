// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <ostream>
#include <random>
#include <vector>

#include "acenet/losses.hpp"
#include "acenet/metrics.hpp"
#include "acenet/network.hpp"
#include "acenet/synth.hpp"

namespace acenet {

/// Linear warm-up from 0 to base_lr over warmup_iters, then poly decay
/// base_lr * (1 - progress)^power where progress runs from 0 at the end of
/// warm-up to 1 at total_iters.
inline double lr_at(std::size_t iter, const TrainConfig& cfg) {
  if (iter >= cfg.total_iters) return 0.0;
  if (iter < cfg.warmup_iters) return cfg.base_lr * static_cast<double>(iter) / static_cast<double>(cfg.warmup_iters);
  const double progress =
      static_cast<double>(iter - cfg.warmup_iters) / static_cast<double>(cfg.total_iters - cfg.warmup_iters);
  return cfg.base_lr * std::pow(1.0 - progress, cfg.poly_power);
}

/// SGD with momentum and decoupled weight decay:
///   v <- mu v + g;  p <- p - lr (v + wd p)
template <typename T>
class SgdMomentum {
 public:
  SgdMomentum(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(nn::ParamStore<T>& params, double lr) {
    for (auto& [name, p] : params) {
      auto& v = velocity_[name];
      auto data = p.mutable_data();
      if (v.empty()) v.assign(data.size(), 0.0);
      const bool has = p.has_grad();
      auto g = p.grad();
      for (std::size_t i = 0; i < data.size(); ++i) {
        v[i] = momentum_ * v[i] + (has ? static_cast<double>(g[i]) : 0.0);
        data[i] = static_cast<T>(static_cast<double>(data[i]) - lr * (v[i] + weight_decay_ * static_cast<double>(data[i])));
      }
      p.zero_grad();
    }
  }

 private:
  double momentum_;
  double weight_decay_;
  std::map<std::string, std::vector<double>> velocity_;
};

struct Batch {
  Tensor<float> images;  // [B, 3, H, W]
  LossTargets<float> targets;
};

inline Batch make_batch(const std::vector<const synth::Sample*>& samples, std::size_t num_classes) {
  if (samples.empty()) throw ContractError("make_batch: empty batch");
  const auto& first = *samples[0];
  const std::size_t b = samples.size(), h = first.labels.height, w = first.labels.width, j = first.heatmaps.dim(0);
  std::vector<float> img, hm;
  img.reserve(b * 3 * h * w);
  hm.reserve(b * j * h * w);
  Batch out;
  out.targets.labels = LabelMap(b, h, w, num_classes);
  out.targets.boundary = LabelMap(b, h, w, 2);
  for (std::size_t n = 0; n < b; ++n) {
    const auto& s = *samples[n];
    if (s.labels.height != h || s.labels.width != w || s.heatmaps.dim(0) != j)
      throw DimensionError("make_batch: samples differ in extents");
    img.insert(img.end(), s.image.data().begin(), s.image.data().end());
    hm.insert(hm.end(), s.heatmaps.data().begin(), s.heatmaps.data().end());
    std::copy(s.labels.labels.begin(), s.labels.labels.end(), out.targets.labels.labels.begin() + n * h * w);
    std::copy(s.boundary.labels.begin(), s.boundary.labels.end(), out.targets.boundary.labels.begin() + n * h * w);
  }
  out.images = Tensor<float>(Shape{b, 3, h, w}, std::move(img));
  out.targets.heatmaps = Tensor<float>(Shape{b, j, h, w}, std::move(hm));
  return out;
}

/// Resizes network outputs to label resolution for the objective.
template <typename T>
LossInputs<T> loss_inputs(const NetworkOutputs<T>& out, std::size_t height, std::size_t width) {
  auto fit = [&](const Tensor<T>& t) {
    return t.dim(2) == height && t.dim(3) == width ? t : nn::upsample(t, height, width, nn::UpsampleMode::kBilinear);
  };
  LossInputs<T> in;
  in.base_logits = fit(out.base_logits);
  in.fine_logits = fit(out.fine_logits);
  if (out.boundary_logits) in.boundary_logits = fit(*out.boundary_logits);
  if (out.heatmaps) in.skeleton_pred = fit(*out.heatmaps);
  return in;
}

struct TrainLogEntry {
  std::size_t iter = 0;
  double lr = 0.0;
  double total = 0.0;
  double base = 0.0;
  double fine = 0.0;
  double boundary = 0.0;
  double skeleton = 0.0;
};

inline void write_log_header(std::ostream& os) { os << "iter,lr,L_total,L_base,L_fine,L_bd,L_ske\n"; }

inline void write_log_line(std::ostream& os, const TrainLogEntry& e) {
  os << e.iter << ',' << std::setprecision(9) << e.lr << ',' << e.total << ',' << e.base << ',' << e.fine << ','
     << e.boundary << ',' << e.skeleton << '\n';
}

/// Mini-batch SGD on the multi-task objective. Batches are drawn with a
/// seeded engine, so a fixed seed replays bit-identically on one platform.
/// Throws ContractError naming the iteration if the loss stops being finite.
inline std::vector<TrainLogEntry> train(Network<float>& net, const TrainConfig& cfg, const std::vector<synth::Sample>& data,
                                        std::ostream* log = nullptr) {
  cfg.validate();
  if (data.empty()) throw IoError("training set is empty");
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  SgdMomentum<float> opt(cfg.momentum, cfg.weight_decay);
  const std::size_t h = data[0].labels.height, w = data[0].labels.width;
  std::vector<TrainLogEntry> history;
  if (log) write_log_header(*log);
  for (std::size_t it = 0; it < cfg.total_iters; ++it) {
    std::vector<synth::Sample> flipped;
    flipped.reserve(cfg.batch_size);
    std::vector<const synth::Sample*> picks;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const auto& s = data[rng() % data.size()];
      const bool flip = cfg.flip && (rng() & 1u);
      if (flip) {
        flipped.push_back(synth::flip_horizontal(s));
        picks.push_back(&flipped.back());
      } else {
        picks.push_back(&s);
      }
    }
    auto batch = make_batch(picks, net.config().num_classes);
    auto out = net.forward(batch.images);
    auto terms = total_loss(loss_inputs(out, h, w), batch.targets, cfg.loss);
    const double total = terms.total.item();
    if (!std::isfinite(total)) throw ContractError("non-finite loss at iteration " + std::to_string(it));
    backward(terms.total);
    const double lr = lr_at(it, cfg);
    {
      NoGradGuard guard;
      opt.step(net.params(), lr);
    }
    TrainLogEntry e{it, lr, total, terms.base, terms.fine, terms.boundary, terms.skeleton};
    history.push_back(e);
    if (log) write_log_line(*log, e);
  }
  return history;
}

/// Per-pixel argmax of `logits` after bilinear resizing to height x width.
template <typename T>
LabelMap argmax_labels(const Tensor<T>& logits, std::size_t height, std::size_t width) {
  NoGradGuard guard;
  auto up = logits.dim(2) == height && logits.dim(3) == width ? logits : nn::upsample(logits, height, width);
  const std::size_t b = up.dim(0), k = up.dim(1), plane = height * width;
  LabelMap out(b, height, width, k);
  auto x = up.data();
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t p = 0; p < plane; ++p) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < k; ++c)
        if (x[(n * k + c) * plane + p] > x[(n * k + best) * plane + p]) best = c;
      out.labels[n * plane + p] = static_cast<int>(best);
    }
  return out;
}

/// Confusion counts of the fine prediction over a split. With
/// `oracle_inject` the ground truth is scored against itself.
inline ConfusionMatrix evaluate(const Network<float>& net, const std::vector<synth::Sample>& data, bool oracle_inject = false,
                                std::size_t batch_size = 8) {
  NoGradGuard guard;
  const std::size_t k = net.config().num_classes;
  ConfusionMatrix cm(k);
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::vector<const synth::Sample*> picks;
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) picks.push_back(&data[i]);
    auto batch = make_batch(picks, k);
    const auto& gt = batch.targets.labels;
    if (oracle_inject) {
      cm.add(gt, gt);
      continue;
    }
    auto out = net.forward(batch.images);
    cm.add(argmax_labels(out.fine_logits, gt.height, gt.width), gt);
  }
  return cm;
}

}  // namespace acenet
