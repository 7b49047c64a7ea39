// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "acenet/gradcheck_suite.hpp"
#include "acenet/losses.hpp"
#include "oracles.hpp"

using namespace acenet;
using oracle::random_labels;
using oracle::random_tensor;

namespace {

/// Logits with `margin` on the labelled class and 0 elsewhere.
Tensor<double> confident_logits(const LabelMap& t, std::size_t k, double margin) {
  const std::size_t plane = t.height * t.width;
  std::vector<double> v(t.batch * k * plane, 0.0);
  for (std::size_t n = 0; n < t.batch; ++n)
    for (std::size_t p = 0; p < plane; ++p) {
      const int l = t.labels[n * plane + p];
      if (l != t.ignore_index) v[(n * k + static_cast<std::size_t>(l)) * plane + p] = margin;
    }
  return Tensor<double>(Shape{t.batch, k, t.height, t.width}, v);
}

}  // namespace

TEST(CrossEntropy, ConfidentLogitsApproachZero) {
  std::mt19937_64 rng(1);
  auto t = random_labels(rng, 2, 4, 4, 5);
  EXPECT_LT(cross_entropy(confident_logits(t, 5, 40.0), t).item(), 1e-15);
  EXPECT_GE(cross_entropy(confident_logits(t, 5, 40.0), t).item(), 0.0);
}

TEST(CrossEntropy, UniformLogitsGiveLogK) {
  std::mt19937_64 rng(2);
  for (std::size_t k : {2u, 5u, 7u}) {
    auto t = random_labels(rng, 1, 3, 3, k);
    EXPECT_NEAR(cross_entropy(Tensor<double>::zeros({1, k, 3, 3}), t).item(), std::log(static_cast<double>(k)), 1e-12);
  }
}

TEST(CrossEntropy, HandBuiltTwoByTwo) {
  LabelMap t(1, 2, 2, 2);
  t.labels = {0, 1, 1, 0};
  // class-0 logits then class-1 logits
  Tensor<float> logits(Shape{1, 2, 2, 2}, {2.f, 0.f, -1.f, 0.5f, 0.f, 1.f, 1.f, 0.5f});
  const double l0 = std::log(1 + std::exp(-2.0));
  const double l1 = std::log(1 + std::exp(-1.0));
  const double l2 = std::log(1 + std::exp(-2.0));
  const double l3 = std::log(2.0);
  EXPECT_NEAR(cross_entropy(logits, t).item(), (l0 + l1 + l2 + l3) / 4.0, 1e-6);
  EXPECT_NEAR(cross_entropy(logits, t).item(), static_cast<double>(oracle::cross_entropy(logits, t)), 1e-6);
}

TEST(CrossEntropy, IgnoredPixelsAreExcluded) {
  std::mt19937_64 rng(3);
  auto t = random_labels(rng, 1, 4, 4, 3, 0.3);
  auto logits = random_tensor<double>({1, 3, 4, 4}, rng, 3.0);
  EXPECT_NEAR(cross_entropy(logits, t).item(), static_cast<double>(oracle::cross_entropy(logits, t)), 1e-12);
}

TEST(CrossEntropy, OutOfRangeLabelIsADataError) {
  LabelMap t(1, 1, 2, 3);
  t.labels = {0, 3};
  EXPECT_THROW(cross_entropy(Tensor<float>::zeros({1, 3, 1, 2}), t), DataError);
}

TEST(Ohem, KeepAllEqualsCrossEntropy) {
  std::mt19937_64 rng(4);
  LossWeights w;
  w.ohem_keep_fraction = 1.0;
  for (int i = 0; i < 50; ++i) {
    auto t = random_labels(rng, 2, 5, 6, 4, 0.1);
    auto logits = random_tensor<float>({2, 4, 5, 6}, rng, 4.0);
    EXPECT_NEAR(ohem_cross_entropy(logits, t, w).item(), cross_entropy(logits, t).item(), 1e-6);
  }
}

TEST(Ohem, KeepsTheHardestPixel) {
  // Per-pixel losses 0.1 and 2.0 by construction.
  LabelMap t(1, 1, 2, 2);
  t.labels = {0, 0};
  const double l_easy = 0.1, l_hard = 2.0;
  // For K=2 and logits (a, 0) on class 0: loss = log(1 + e^{-a}), so a = -log(e^l - 1).
  const double a_easy = -std::log(std::exp(l_easy) - 1.0), a_hard = -std::log(std::exp(l_hard) - 1.0);
  Tensor<double> logits(Shape{1, 2, 1, 2}, {a_easy, a_hard, 0.0, 0.0}, true);
  LossWeights w;
  w.ohem_keep_fraction = 0.5;
  w.ohem_min_kept = 1;
  auto loss = ohem_cross_entropy(logits, t, w);
  EXPECT_NEAR(loss.item(), 2.0, 1e-12);
  backward(loss);
  EXPECT_EQ(logits.grad()[0], 0.0);  // discarded pixel
  EXPECT_EQ(logits.grad()[2], 0.0);
  EXPECT_NE(logits.grad()[1], 0.0);
}

TEST(Ohem, TiesAtThresholdAreAllKept) {
  // Four pixels with identical losses and a quota of one: all four are kept.
  LabelMap t(1, 2, 2, 3);
  t.labels = {0, 1, 2, 0};
  auto logits = Tensor<double>::zeros({1, 3, 2, 2}, true);
  LossWeights w;
  w.ohem_keep_fraction = 0.25;
  w.ohem_min_kept = 1;
  EXPECT_EQ(ohem_quota(4, w), 1u);
  auto loss = ohem_cross_entropy(logits, t, w);
  EXPECT_NEAR(loss.item(), std::log(3.0), 1e-12);
  backward(loss);
  std::size_t nonzero_pixels = 0;
  for (std::size_t p = 0; p < 4; ++p) nonzero_pixels += logits.grad()[p] != 0.0;
  EXPECT_EQ(nonzero_pixels, 4u);
}

TEST(Ohem, MatchesSortOracle) {
  std::mt19937_64 rng(5);
  LossWeights w;
  w.ohem_keep_fraction = 0.3;
  w.ohem_min_kept = 5;
  for (int i = 0; i < 30; ++i) {
    auto t = random_labels(rng, 1, 6, 6, 4);
    auto logits = random_tensor<double>({1, 4, 6, 6}, rng, 3.0);
    std::vector<long double> losses;
    for (std::size_t p = 0; p < 36; ++p) losses.push_back(oracle::pixel_nll(logits, 0, p, t.labels[p]));
    std::sort(losses.rbegin(), losses.rend());
    const std::size_t keep = std::max<std::size_t>(5, static_cast<std::size_t>(std::ceil(0.3 * 36)));
    long double acc = 0.0L;
    for (std::size_t k = 0; k < keep; ++k) acc += losses[k];
    EXPECT_NEAR(ohem_cross_entropy(logits, t, w).item(), static_cast<double>(acc / keep), 1e-12);
  }
}

TEST(BoundaryCe, BalancedTargetEqualsPlainCe) {
  std::mt19937_64 rng(6);
  LabelMap t(1, 2, 4, 2);
  t.labels = {1, 0, 1, 0, 0, 1, 0, 1};
  auto w = boundary_class_weights(t, LossWeights{});
  EXPECT_EQ(w[0], 1.0);
  EXPECT_EQ(w[1], 1.0);
  auto logits = random_tensor<double>({1, 2, 2, 4}, rng, 2.0);
  EXPECT_NEAR(boundary_ce(logits, t, LossWeights{}).item(), cross_entropy(logits, t).item(), 1e-12);
}

TEST(BoundaryCe, OneInFourCountingOracle) {
  std::mt19937_64 rng(7);
  LabelMap t(1, 2, 2, 2);
  t.labels = {0, 0, 1, 0};
  auto w = boundary_class_weights(t, LossWeights{});
  EXPECT_NEAR(w[0], 4.0 / 6.0, 1e-15);
  EXPECT_NEAR(w[1], 2.0, 1e-15);
  auto logits = random_tensor<double>({1, 2, 2, 2}, rng, 2.0);
  long double num = 0.0L, den = 0.0L;
  for (std::size_t p = 0; p < 4; ++p) {
    const double wp = t.labels[p] ? 2.0 : 4.0 / 6.0;
    num += wp * oracle::pixel_nll(logits, 0, p, t.labels[p]);
    den += wp;
  }
  EXPECT_NEAR(boundary_ce(logits, t, LossWeights{}).item(), static_cast<double>(num / den), 1e-12);
}

TEST(BoundaryCe, AllBackgroundFallsBackToFixedWeights) {
  std::mt19937_64 rng(8);
  LabelMap t(1, 3, 3, 2);
  LossWeights lw;
  lw.boundary_pos_weight = 3.0;
  auto w = boundary_class_weights(t, lw);
  EXPECT_EQ(w[0], 1.0);
  EXPECT_EQ(w[1], 3.0);
  auto logits = random_tensor<double>({1, 2, 3, 3}, rng);
  const double v = boundary_ce(logits, t, lw).item();
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, cross_entropy(logits, t).item(), 1e-12);
}

TEST(BoundaryCe, FixedModeUsesConfiguredWeight) {
  LabelMap t(1, 1, 4, 2);
  t.labels = {1, 0, 0, 0};
  LossWeights lw;
  lw.boundary_weight_mode = BoundaryWeightMode::kFixed;
  lw.boundary_pos_weight = 5.0;
  auto w = boundary_class_weights(t, lw);
  EXPECT_EQ(w[0], 1.0);
  EXPECT_EQ(w[1], 5.0);
  EXPECT_THROW(boundary_ce(Tensor<double>::zeros({1, 3, 1, 4}), t, lw), DimensionError);
}

TEST(SkeletonMse, Examples) {
  std::mt19937_64 rng(9);
  auto g = random_tensor<double>({2, 3, 4, 4}, rng);
  EXPECT_EQ(skeleton_mse(g, g).item(), 0.0);
  EXPECT_NEAR(skeleton_mse(add_scalar(g, 1.0), g).item(), 1.0, 1e-12);
  auto p = random_tensor<double>({2, 3, 4, 4}, rng);
  long double acc = 0.0L;
  for (std::size_t i = 0; i < p.numel(); ++i) acc += (static_cast<long double>(p[i]) - g[i]) * (static_cast<long double>(p[i]) - g[i]);
  EXPECT_NEAR(skeleton_mse(p, g).item(), static_cast<double>(acc / p.numel()), 1e-12);
  EXPECT_THROW(skeleton_mse(p, Tensor<double>::zeros({2, 3, 4, 3})), DimensionError);
}

namespace {

struct Fixture {
  LossInputs<double> in;
  LossTargets<double> tg;
};

Fixture random_fixture(std::mt19937_64& rng) {
  Fixture f;
  f.tg.labels = random_labels(rng, 2, 4, 4, 5);
  f.tg.boundary = random_labels(rng, 2, 4, 4, 2);
  f.tg.heatmaps = random_tensor<double>({2, 3, 4, 4}, rng);
  f.in.base_logits = random_tensor<double>({2, 5, 4, 4}, rng, 2.0);
  f.in.fine_logits = random_tensor<double>({2, 5, 4, 4}, rng, 2.0);
  f.in.boundary_logits = random_tensor<double>({2, 2, 4, 4}, rng, 2.0);
  f.in.skeleton_pred = random_tensor<double>({2, 3, 4, 4}, rng);
  return f;
}

}  // namespace

TEST(TotalLoss, ZeroWeightsLeaveParsingTerms) {
  std::mt19937_64 rng(10);
  LossWeights w;
  w.alpha = 0.0;
  w.beta = 0.0;
  for (int i = 0; i < 20; ++i) {
    auto f = random_fixture(rng);
    auto terms = total_loss(f.in, f.tg, w);
    EXPECT_NEAR(terms.total.item(), cross_entropy(f.in.base_logits, f.tg.labels).item() +
                                        ohem_cross_entropy(f.in.fine_logits, f.tg.labels, w).item(),
                1e-6);
  }
}

TEST(TotalLoss, ComponentwiseSum) {
  std::mt19937_64 rng(11);
  LossWeights w;
  w.alpha = 1.0;
  w.beta = 2.0;
  auto f = random_fixture(rng);
  auto terms = total_loss(f.in, f.tg, w);
  const double base = cross_entropy(f.in.base_logits, f.tg.labels).item();
  const double fine = ohem_cross_entropy(f.in.fine_logits, f.tg.labels, w).item();
  const double bd = boundary_ce(*f.in.boundary_logits, f.tg.boundary, w).item();
  const double ske = skeleton_mse(*f.in.skeleton_pred, f.tg.heatmaps).item();
  EXPECT_NEAR(terms.total.item(), base + fine + 1.0 * bd + 2.0 * ske, 1e-12);
  EXPECT_NEAR(terms.base, base, 1e-12);
  EXPECT_NEAR(terms.fine, fine, 1e-12);
  EXPECT_NEAR(terms.boundary, bd, 1e-12);
  EXPECT_NEAR(terms.skeleton, ske, 1e-12);
}

TEST(TotalLoss, LinearInAlphaAndBeta) {
  std::mt19937_64 rng(12);
  auto f = random_fixture(rng);
  LossWeights w;
  const double h = 0.5;
  auto at = [&](double a, double b) {
    w.alpha = a;
    w.beta = b;
    return total_loss(f.in, f.tg, w);
  };
  auto t0 = at(1.0, 40.0);
  EXPECT_NEAR((at(1.0 + h, 40.0).total.item() - at(1.0 - h, 40.0).total.item()) / (2 * h), t0.boundary, 1e-6);
  EXPECT_NEAR((at(1.0, 40.0 + h).total.item() - at(1.0, 40.0 - h).total.item()) / (2 * h), t0.skeleton, 1e-6);
}

TEST(TotalLoss, PerfectPredictionsApproachZero) {
  std::mt19937_64 rng(13);
  auto f = random_fixture(rng);
  f.in.base_logits = confident_logits(f.tg.labels, 5, 60.0);
  f.in.fine_logits = confident_logits(f.tg.labels, 5, 60.0);
  f.in.boundary_logits = confident_logits(f.tg.boundary, 2, 60.0);
  f.in.skeleton_pred = f.tg.heatmaps;
  auto terms = total_loss(f.in, f.tg, LossWeights{});
  EXPECT_LT(terms.total.item(), 1e-20);
  EXPECT_GE(terms.total.item(), 0.0);
}

TEST(TotalLoss, InvalidWeightsAreConfigErrors) {
  std::mt19937_64 rng(14);
  auto f = random_fixture(rng);
  LossWeights w;
  w.alpha = -1.0;
  EXPECT_THROW(total_loss(f.in, f.tg, w), ConfigError);
  w = LossWeights{};
  w.ohem_keep_fraction = 0.0;
  EXPECT_THROW(total_loss(f.in, f.tg, w), ConfigError);
}

TEST(GradientSuite, LossesWithinTolerance) {
  for (const auto& r : gradcheck::run("losses", 20)) EXPECT_LE(r.max_error, 1e-4) << r.name;
}
