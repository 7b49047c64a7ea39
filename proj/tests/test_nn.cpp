// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "acenet/gradcheck_suite.hpp"
#include "acenet/nn/blocks.hpp"
#include "acenet/nn/params.hpp"
#include "oracles.hpp"

using namespace acenet;
using namespace acenet::nn;
using acenet::gradcheck::Tensors;

namespace {

template <typename T>
Tensor<T> random_tensor(Shape s, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  std::vector<T> v(s.numel());
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>(s, std::move(v));
}

template <typename T>
void fill(Tensor<T>& t, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (auto& x : t.mutable_data()) x = static_cast<T>(dist(rng));
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(Conv2d, IdentityPointwiseKernel) {
  std::mt19937_64 rng(1);
  auto x = random_tensor<float>({2, 3, 4, 5}, rng);
  auto p = ConvParams<float>::same(3, 3, 1, 1, 1, false);
  for (std::size_t c = 0; c < 3; ++c) p.weight.mutable_data()[c * 3 + c] = 1.f;
  auto y = conv2d(x, p);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Conv2d, AllOnesKernelCountsOverlappedTaps) {
  auto x = Tensor<float>::full({1, 1, 3, 3}, 1.f);
  auto p = ConvParams<float>::same(1, 1, 3, 3, 1, false);
  for (auto& v : p.weight.mutable_data()) v = 1.f;
  auto y = conv2d(x, p);
  EXPECT_EQ(y.at(0, 0, 1, 1), 9.f);
  EXPECT_EQ(y.at(0, 0, 0, 0), 4.f);
  EXPECT_EQ(y.at(0, 0, 2, 2), 4.f);
  EXPECT_EQ(y.at(0, 0, 0, 1), 6.f);
}

TEST(Conv2d, MatchesDirectOracle) {
  std::mt19937_64 rng(2);
  struct Geo { std::size_t ci, co, h, w, kh, kw, stride, ph, pw, dil; };
  for (const auto& g : {Geo{2, 3, 5, 6, 3, 3, 1, 1, 1, 1}, Geo{3, 2, 8, 7, 3, 3, 2, 1, 1, 1}, Geo{2, 4, 7, 7, 3, 3, 1, 2, 2, 2},
                        Geo{4, 5, 6, 6, 1, 1, 1, 0, 0, 1}, Geo{3, 3, 5, 9, 1, 7, 1, 0, 3, 1}}) {
    ConvParams<double> p;
    p.weight = random_tensor<double>({g.co, g.ci, g.kh, g.kw}, rng);
    p.bias = random_tensor<double>({g.co}, rng);
    p.stride = g.stride;
    p.pad_h = g.ph;
    p.pad_w = g.pw;
    p.dilation = g.dil;
    auto x = random_tensor<double>({2, g.ci, g.h, g.w}, rng);
    EXPECT_LT(max_abs_diff(conv2d(x, p), oracle::conv2d(x, p)), 1e-12);
  }
}

TEST(Conv2d, ChannelMismatchIsADimensionError) {
  auto x = Tensor<float>::zeros({1, 2, 3, 3});
  auto p = ConvParams<float>::same(3, 1, 3, 3, 1, false);
  EXPECT_THROW(conv2d(x, p), DimensionError);
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  Tensors in{random_tensor<double>({1, 2, 4, 4}, rng), random_tensor<double>({3, 2, 3, 3}, rng), random_tensor<double>({3}, rng)};
  auto c = random_tensor<double>({1, 3, 4, 4}, rng);
  double err = grad_check(
      [&](const Tensors& x) { return gradcheck::project(conv2d(x[0], gradcheck::conv_from(x, 1, 2, 1, 1, 1)), c); }, in);
  EXPECT_LE(err, 1e-4);
}

TEST(GcBlock, DeltaKernelsDoubleTheInput) {
  std::mt19937_64 rng(4);
  const std::size_t c = 3, k = 5;
  auto p = GCParams<float>::create(c, c, k, false);
  for (auto* conv : {&p.a_row, &p.a_col, &p.b_col, &p.b_row}) {
    auto w = conv->weight.mutable_data();
    const std::size_t kh = conv->kernel_h(), kw = conv->kernel_w();
    for (std::size_t o = 0; o < c; ++o) w[((o * c + o) * kh + kh / 2) * kw + kw / 2] = 1.f;
  }
  auto x = random_tensor<float>({2, c, 6, 7}, rng);
  auto y = gc_block(x, p);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], 2.f * x[i]);
}

TEST(GcBlock, ZeroParamsGiveZeros) {
  std::mt19937_64 rng(5);
  auto p = GCParams<float>::create(4, 2, 7, false);
  auto y = gc_block(random_tensor<float>({1, 4, 5, 5}, rng), p);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 5, 5}));
  for (float v : y.data()) EXPECT_EQ(v, 0.f);
}

TEST(GcBlock, MatchesTwoStageSeparableOracle) {
  std::mt19937_64 rng(6);
  auto p = GCParams<double>::create(3, 4, 5, false);
  for (auto* conv : {&p.a_row, &p.a_col, &p.b_col, &p.b_row}) {
    fill(conv->weight, rng, 0.5);
    fill(conv->bias, rng, 0.5);
  }
  auto x = random_tensor<double>({2, 3, 6, 8}, rng);
  auto a = oracle::conv2d(oracle::conv2d(x, p.a_row), p.a_col);
  auto b = oracle::conv2d(oracle::conv2d(x, p.b_col), p.b_row);
  std::vector<double> ref(a.numel());
  for (std::size_t i = 0; i < ref.size(); ++i) ref[i] = a[i] + b[i];
  EXPECT_LT(max_abs_diff(gc_block(x, p), Tensor<double>(a.shape(), ref)), 1e-5);
}

TEST(GcBlock, EvenKernelIsAConfigError) {
  EXPECT_THROW(GCParams<float>::create(2, 2, 4), ConfigError);
  auto p = GCParams<float>::create(2, 2, 3);
  p.k = 4;
  EXPECT_THROW(gc_block(Tensor<float>::zeros({1, 2, 3, 3}), p), ConfigError);
}

TEST(PyramidPooling, ConstantInputReproducedByEveryBranch) {
  const std::size_t c = 4;
  auto p = PyramidPoolingParams<float>::create(c, {1, 2, 3, 6}, false);
  for (auto& br : p.branches) br.weight.mutable_data()[0] = 1.f;  // out channel 0 copies in channel 0
  auto x = Tensor<float>::full({1, c, 6, 6}, 2.5f);
  auto y = pyramid_pooling(x, p);
  EXPECT_EQ(y.dim(1), c + 4u);
  for (std::size_t b = 0; b < 4; ++b)
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(y.at(0, c + b, i, j), 2.5f, 1e-6);
}

TEST(PyramidPooling, SingleBinIsTheGlobalAverage) {
  std::mt19937_64 rng(7);
  auto p = PyramidPoolingParams<double>::create(2, {1}, false);
  p.branches[0].weight.mutable_data()[1] = 1.0;  // copy channel 1
  auto x = random_tensor<double>({1, 2, 5, 4}, rng);
  double mean = 0.0;
  for (std::size_t i = 0; i < 20; ++i) mean += x[20 + i];
  mean /= 20.0;
  auto y = pyramid_pooling(x, p);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(y.at(0, 2, i, j), mean, 1e-12);
}

TEST(PyramidPooling, QuadrantMeans) {
  std::mt19937_64 rng(8);
  auto x = random_tensor<double>({1, 1, 4, 4}, rng);
  auto pooled = adaptive_avg_pool2d(x, 2, 2);
  for (std::size_t qy = 0; qy < 2; ++qy)
    for (std::size_t qx = 0; qx < 2; ++qx) {
      double m = 0.0;
      for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) m += x.at(0, 0, 2 * qy + i, 2 * qx + j);
      EXPECT_NEAR(pooled.at(0, 0, qy, qx), m / 4.0, 1e-15);
    }
  // Through the module: the bins={2} branch with an identity projection shows the
  // quadrant mean at the quadrant centre after the half-pixel upsample.
  auto p = PyramidPoolingParams<double>::create(1, {2}, false);
  p.branches[0].weight.mutable_data()[0] = 1.0;
  auto y = pyramid_pooling(x, p);
  EXPECT_NEAR(y.at(0, 1, 0, 0), pooled.at(0, 0, 0, 0), 1e-12);
  EXPECT_NEAR(y.at(0, 1, 3, 3), pooled.at(0, 0, 1, 1), 1e-12);
}

TEST(PyramidPooling, OversizedBinIsAConfigError) {
  auto p = PyramidPoolingParams<float>::create(4, {1, 8}, false);
  EXPECT_THROW(pyramid_pooling(Tensor<float>::zeros({1, 4, 6, 6}), p), ConfigError);
}

TEST(ChannelShuffle, IndexFormulaAndIdentity) {
  Tensor<float> x(Shape{1, 4, 1, 1}, {0, 1, 2, 3});
  auto y = channel_shuffle(x, 2);
  EXPECT_EQ((std::vector<float>(y.data().begin(), y.data().end())), (std::vector<float>{0, 2, 1, 3}));
  auto same = channel_shuffle(x, 1);
  EXPECT_EQ((std::vector<float>(same.data().begin(), same.data().end())), (std::vector<float>{0, 1, 2, 3}));
  EXPECT_THROW(channel_shuffle(x, 3), ConfigError);
}

TEST(ChannelShuffle, InverseRestoresBitExactly) {
  std::mt19937_64 rng(9);
  const std::size_t c = 12, g = 4;
  auto x = random_tensor<float>({2, c, 3, 3}, rng);
  auto y = channel_shuffle(x, g);
  std::vector<std::size_t> inv(c);
  for (std::size_t k = 0; k < c; ++k) inv[k] = shuffled_position(k, c, g);
  auto back = gather_channels(y, inv);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(back[i], x[i]);
}

TEST(ChannelShuffle, IsAPermutationPreservingChannelSums) {
  std::mt19937_64 rng(10);
  for (std::size_t c : {4u, 8u, 12u, 16u})
    for (std::size_t g : {1u, 2u, 4u}) {
      std::vector<bool> hit(c, false);
      for (std::size_t k = 0; k < c; ++k) hit[shuffled_position(k, c, g)] = true;
      EXPECT_TRUE(std::all_of(hit.begin(), hit.end(), [](bool b) { return b; }));
      // Repeated application cycles back to the identity after the permutation's order.
      std::size_t order = 1;
      std::vector<std::size_t> pos(c);
      std::iota(pos.begin(), pos.end(), 0);
      auto step = [&] {
        for (auto& v : pos) v = shuffled_position(v, c, g);
      };
      step();
      while (!std::is_sorted(pos.begin(), pos.end())) {
        step();
        ++order;
      }
      auto x = random_tensor<double>({1, c, 2, 2}, rng);
      auto y = x;
      for (std::size_t r = 0; r < order; ++r) y = channel_shuffle(y, g);
      for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i]);
      auto once = channel_shuffle(x, g);
      for (std::size_t s = 0; s < 4; ++s) {
        double a = 0.0, b = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
          a += x[k * 4 + s];
          b += once[k * 4 + s];
        }
        EXPECT_NEAR(a, b, 1e-12);
      }
    }
}

TEST(Upsample, IdentityAndConstant) {
  std::mt19937_64 rng(11);
  auto x = random_tensor<float>({1, 2, 3, 5}, rng);
  auto same = upsample(x, 3, 5);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(same[i], x[i]);
  auto c = Tensor<float>::full({1, 1, 3, 3}, 4.25f);
  for (auto mode : {UpsampleMode::kBilinear, UpsampleMode::kNearest}) {
    auto y = upsample(c, 7, 11, mode);
    for (float v : y.data()) EXPECT_NEAR(v, 4.25f, 1e-6);
  }
}

TEST(Upsample, BilinearHalfPixelOracle) {
  Tensor<double> x(Shape{1, 1, 2, 2}, {0, 1, 2, 3});
  auto y = upsample(x, 4, 4);
  auto src = [](double o, std::size_t in, std::size_t out) {
    return std::clamp((o + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5, 0.0, static_cast<double>(in - 1));
  };
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      const double sy = src(i, 2, 4), sx = src(j, 2, 4);
      const std::size_t y0 = static_cast<std::size_t>(std::floor(sy)), x0 = static_cast<std::size_t>(std::floor(sx));
      const std::size_t y1 = std::min<std::size_t>(y0 + 1, 1), x1 = std::min<std::size_t>(x0 + 1, 1);
      const double fy = sy - y0, fx = sx - x0;
      const double ref = (1 - fy) * ((1 - fx) * x.at(0, 0, y0, x0) + fx * x.at(0, 0, y0, x1)) +
                         fy * ((1 - fx) * x.at(0, 0, y1, x0) + fx * x.at(0, 0, y1, x1));
      EXPECT_NEAR(y.at(0, 0, i, j), ref, 1e-12) << i << "," << j;
    }
  // Hand values: row 0 is [0, 0.25, 0.75, 1], column 0 is [0, 0.5, 1.5, 2].
  EXPECT_NEAR(y.at(0, 0, 0, 1), 0.25, 1e-12);
  EXPECT_NEAR(y.at(0, 0, 2, 0), 1.5, 1e-12);
  EXPECT_NEAR(y.at(0, 0, 1, 1), 0.75, 1e-12);
}

TEST(Upsample, NearestPicksFloorIndex) {
  Tensor<float> x(Shape{1, 1, 1, 3}, {1, 2, 3});
  auto y = upsample(x, 1, 7, UpsampleMode::kNearest);
  std::vector<float> expect;
  for (std::size_t o = 0; o < 7; ++o) expect.push_back(x[o * 3 / 7]);
  EXPECT_EQ((std::vector<float>(y.data().begin(), y.data().end())), expect);
}

TEST(GradientSuite, NnOpsWithinTolerance) {
  for (const auto& r : gradcheck::run("nnops", 20)) EXPECT_LE(r.max_error, 1e-4) << r.name;
  for (const auto& r : gradcheck::run("tensor", 20)) EXPECT_LE(r.max_error, 1e-4) << r.name;
}

TEST(ParamStore, SaveLoadRoundTripIsBitExact) {
  std::mt19937_64 rng(12);
  ParamStore<float> a, b;
  a.add("x.weight", random_tensor<float>({2, 3, 1, 1}, rng));
  a.add("x.bias", random_tensor<float>({2}, rng));
  b.add("x.weight", Tensor<float>::zeros({2, 3, 1, 1}));
  b.add("x.bias", Tensor<float>::zeros({2}));
  const auto dir = std::filesystem::temp_directory_path() / "acenet_test_params";
  std::filesystem::remove_all(dir);
  save_params(a, dir);
  load_params(b, dir);
  for (const auto& name : {"x.weight", "x.bias"})
    for (std::size_t i = 0; i < a.get(name).numel(); ++i) EXPECT_EQ(b.get(name)[i], a.get(name)[i]);
  ParamStore<float> wrong;
  wrong.add("x.weight", Tensor<float>::zeros({3, 2, 1, 1}));
  wrong.add("x.bias", Tensor<float>::zeros({2}));
  EXPECT_THROW(load_params(wrong, dir), ConfigError);
  EXPECT_THROW(a.add("x.bias", Tensor<float>::zeros({2})), ConfigError);
  std::filesystem::remove_all(dir);
}
