// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "acenet/acet_io.hpp"
#include "acenet/gradcheck.hpp"
#include "acenet/ops.hpp"

using namespace acenet;

namespace {

template <typename T>
Tensor<T> random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0, bool rg = false) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<T> v(s.numel());
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>(s, std::move(v), rg);
}

std::vector<float> to_vec(const Tensor<float>& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(Shape, NumelAndRankLimits) {
  EXPECT_EQ(Shape({2, 3, 4, 5}).numel(), 120u);
  EXPECT_EQ(Shape({7}).str(), "[7]");
  EXPECT_THROW(Shape({1, 1, 1, 1, 1}), DimensionError);
  EXPECT_THROW(Tensor<float>(Shape{2, 2}, {1.f, 2.f, 3.f}), DimensionError);
}

TEST(Matmul, IdentityAndColumnSelection) {
  Tensor<float> eye(Shape{2, 2}, {1, 0, 0, 1});
  Tensor<float> m(Shape{2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(to_vec(matmul(eye, m)), (std::vector<float>{1, 2, 3, 4}));
  Tensor<float> col(Shape{2, 1}, {0, 1});
  EXPECT_EQ(to_vec(matmul(m, col)), (std::vector<float>{2, 4}));
}

TEST(Matmul, MatchesTripleLoopOracle) {
  std::mt19937_64 rng(1);
  for (auto [m, k, j] : std::vector<std::array<std::size_t, 3>>{{3, 4, 2}, {7, 5, 9}, {16, 33, 8}, {1, 1, 1}}) {
    auto a = random_tensor<float>({m, k}, rng), b = random_tensor<float>({k, j}, rng);
    auto c = matmul(a, b);
    ASSERT_EQ(c.shape(), (Shape{m, j}));
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t q = 0; q < j; ++q) {
        double ref = 0.0;
        for (std::size_t t = 0; t < k; ++t) ref += static_cast<double>(a[r * k + t]) * b[t * j + q];
        EXPECT_NEAR(c[r * j + q], ref, 1e-6 * std::max(1.0, std::abs(ref) * 10));
      }
  }
}

TEST(Matmul, BatchedMatchesPerSliceOracle) {
  std::mt19937_64 rng(2);
  auto a = random_tensor<double>({3, 4, 5}, rng), b = random_tensor<double>({3, 5, 2}, rng);
  auto c = matmul(a, b);
  ASSERT_EQ(c.shape(), (Shape{3, 4, 2}));
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t q = 0; q < 2; ++q) {
        double ref = 0.0;
        for (std::size_t t = 0; t < 5; ++t) ref += a[(n * 4 + r) * 5 + t] * b[(n * 5 + t) * 2 + q];
        EXPECT_NEAR(c[(n * 4 + r) * 2 + q], ref, 1e-12);
      }
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tensor<float> a = Tensor<float>::zeros({2, 3}), b = Tensor<float>::zeros({2, 3});
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
  }
}

TEST(Softmax, ClosedForms) {
  auto s = softmax_along(Tensor<double>(Shape{2}, {0.0, 0.0}), 0);
  EXPECT_DOUBLE_EQ(s[0], 0.5);
  EXPECT_DOUBLE_EQ(s[1], 0.5);
  auto t = softmax_along(Tensor<double>(Shape{2}, {0.0, std::log(3.0)}), 0);
  EXPECT_NEAR(t[0], 0.25, 1e-15);
  EXPECT_NEAR(t[1], 0.75, 1e-15);
}

TEST(Softmax, ShiftInvarianceAndNormalization) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = random_tensor<double>({3, 5, 4}, rng, -5, 5);
    const double c = trial * 3.7 - 80.0;
    for (std::size_t axis = 0; axis < 3; ++axis) {
      auto a = softmax_along(x, axis), b = softmax_along(add_scalar(x, c), axis);
      for (std::size_t i = 0; i < a.numel(); ++i) {
        EXPECT_NEAR(a[i], b[i], 1e-12);
        EXPECT_GT(a[i], 0.0);
        EXPECT_LT(a[i], 1.0);
      }
      auto sums = mean_along(a, axis);
      for (std::size_t i = 0; i < sums.numel(); ++i) EXPECT_NEAR(sums[i] * x.dim(axis), 1.0, 1e-12);
    }
  }
}

TEST(Softmax, LargeLogitsStayFinite) {
  auto s = softmax_along(Tensor<float>(Shape{3}, {1000.f, 1000.f, -1000.f}), 0);
  EXPECT_NEAR(s[0], 0.5f, 1e-7);
  EXPECT_NEAR(s[1], 0.5f, 1e-7);
  EXPECT_EQ(s[2], 0.0f);
}

TEST(Layout, ReshapeRoundTripIsBitExact) {
  Tensor<float> x(Shape{1, 2, 2}, {0.1f, -2.5f, 3.25f, 1e-7f});
  auto back = reshape(reshape(x, Shape{1, 4}), Shape{1, 2, 2});
  EXPECT_EQ(back.shape(), x.shape());
  EXPECT_EQ(to_vec(back), to_vec(x));
  EXPECT_THROW(reshape(x, Shape{3}), DimensionError);
}

TEST(Layout, PermuteRoundTripIsBitExact) {
  std::mt19937_64 rng(4);
  auto x = random_tensor<float>({2, 3, 4, 5}, rng);
  auto p = permute(x, {2, 0, 3, 1});
  EXPECT_EQ(p.shape(), (Shape{4, 2, 5, 3}));
  EXPECT_EQ(p.at(1, 0, 4, 2), x.at(0, 2, 1, 4));
  // inverse of {2,0,3,1} is {1,3,0,2}
  auto back = permute(p, {1, 3, 0, 2});
  EXPECT_EQ(to_vec(back), to_vec(x));
  EXPECT_THROW(permute(x, {0, 0, 1, 2}), DimensionError);
}

TEST(Layout, TransposeAndItsGradient) {
  Tensor<double> x(Shape{2, 2}, {1, 2, 3, 4}, true);
  auto t = transpose(x);
  EXPECT_EQ((std::vector<double>(t.data().begin(), t.data().end())), (std::vector<double>{1, 3, 2, 4}));
  backward(sum(t));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Elementwise, IdentitiesAndRelu) {
  std::mt19937_64 rng(5);
  auto x = random_tensor<float>({2, 3, 4, 4}, rng);
  EXPECT_EQ(to_vec(add(x, Tensor<float>::zeros(x.shape()))), to_vec(x));
  EXPECT_EQ(to_vec(relu(Tensor<float>(Shape{2}, {-1.f, 2.f}))), (std::vector<float>{0.f, 2.f}));
  EXPECT_EQ(to_vec(scale(Tensor<float>(Shape{2}, {1.5f, -2.f}), 2.f)), (std::vector<float>{3.f, -4.f}));
}

TEST(Elementwise, PerChannelBroadcast) {
  Tensor<float> x = Tensor<float>::full({2, 3, 2, 2}, 1.f);
  Tensor<float> ch(Shape{3}, {10.f, 20.f, 30.f});
  auto y = add(x, ch);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(y.at(n, c, i, i), 1.f + ch[c]);
  Tensor<float> sc(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  auto z = mul(x, sc);
  EXPECT_EQ(z.at(1, 2, 1, 0), 6.f);
  EXPECT_THROW(add(x, Tensor<float>::zeros({4})), DimensionError);
  EXPECT_THROW(mul(x, Tensor<float>::zeros({2, 3, 2, 3})), DimensionError);
}

TEST(Elementwise, ConcatBlocksRecoveredBySlicing) {
  std::mt19937_64 rng(6);
  auto a = random_tensor<float>({2, 2, 3, 3}, rng), b = random_tensor<float>({2, 3, 3, 3}, rng);
  auto c = concat_channels<float>({a, b});
  EXPECT_EQ(c.shape(), (Shape{2, 5, 3, 3}));
  EXPECT_EQ(to_vec(slice_channels(c, 0, 2)), to_vec(a));
  EXPECT_EQ(to_vec(slice_channels(c, 2, 5)), to_vec(b));
  EXPECT_THROW(concat_channels<float>({a, Tensor<float>::zeros({2, 1, 4, 3})}), DimensionError);
}

TEST(Elementwise, MeanAlongDividesByExtent) {
  Tensor<double> x(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  auto r = mean_along(x, 1);
  EXPECT_EQ(r.shape(), (Shape{2}));
  EXPECT_DOUBLE_EQ(r[0], 2.0);
  EXPECT_DOUBLE_EQ(r[1], 5.0);
  auto c = mean_along(x, 0);
  EXPECT_DOUBLE_EQ(c[2], 4.5);
}

TEST(Backward, SumAndSquare) {
  Tensor<double> x(Shape{3}, {1.0, -2.0, 0.5}, true);
  backward(sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
  backward(sum(mul(x, x)));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(x.grad()[i], 2.0 * x[i]);
}

TEST(Backward, ReuseAccumulatesAdditively) {
  Tensor<double> x(Shape{2}, {3.0, -1.0}, true);
  auto y = add(scale(x, 2.0), mul(x, x));  // 2x + x^2
  backward(sum(add(y, x)));                // + x
  EXPECT_DOUBLE_EQ(x.grad()[0], 3.0 + 2.0 * 3.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 3.0 - 2.0);
}

TEST(Backward, RepeatedCallsDoNotAccumulateAcrossLosses) {
  Tensor<double> x(Shape{2}, {1.0, 2.0}, true);
  backward(sum(x));
  backward(sum(x));
  EXPECT_EQ(x.grad()[0], 1.0);
}

TEST(Backward, ContractErrors) {
  Tensor<double> x(Shape{2}, {1.0, 2.0}, true);
  EXPECT_THROW(backward(scale(x, 2.0)), ContractError);
  EXPECT_THROW(backward(sum(Tensor<double>(Shape{2}, {1.0, 2.0}))), ContractError);
  auto y = scale(x, 2.0);
  EXPECT_THROW(y.mutable_data(), ContractError);
}

TEST(Backward, NoGradGuardSkipsRecording) {
  Tensor<double> x(Shape{2}, {1.0, 2.0}, true);
  {
    NoGradGuard guard;
    EXPECT_FALSE(scale(x, 2.0).requires_grad());
  }
  EXPECT_TRUE(scale(x, 2.0).requires_grad());
}

TEST(GradCheck, LinearIsExact) {
  std::mt19937_64 rng(7);
  auto x = random_tensor<double>({2, 3, 4}, rng);
  EXPECT_LT(grad_check([](const Tensor<double>& t) { return sum(t); }, x), 1e-10);
}

TEST(GradCheck, ConstantSoftmaxSum) {
  std::mt19937_64 rng(8);
  auto x = random_tensor<double>({4, 5}, rng);
  EXPECT_LT(grad_check([](const Tensor<double>& t) { return sum(softmax_along(t, 1)); }, x), 1e-6);
}

TEST(GradCheck, DetectsAWrongBackward) {
  // Square with a deliberately halved adjoint.
  auto bad_square = [](const Tensor<double>& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * x[i];
    auto xn = x.node();
    return Tensor<double>::make_result(x.shape(), std::move(out), {x}, [xn](detail::Node<double>& self) {
      xn->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i] * xn->data[i];
    });
  };
  Tensor<double> x(Shape{3}, {1.0, 2.0, 3.0});
  EXPECT_GT(grad_check([&](const Tensor<double>& t) { return sum(bad_square(t)); }, x), 0.4);
}

TEST(AcetFormat, HeaderLayout) {
  Tensor<float> t(Shape{2, 1}, {1.0f, -0.0f});
  auto bytes = encode_acet(t);
  ASSERT_EQ(bytes.size(), 4u + 4u + 4u + 2u * 4u + 2u * 4u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "ACET");
  EXPECT_EQ(bytes[4], 1u);   // version, little-endian
  EXPECT_EQ(bytes[8], 2u);   // rank
  EXPECT_EQ(bytes[12], 2u);  // extent 0
  EXPECT_EQ(bytes[16], 1u);  // extent 1
  // 1.0f = 0x3f800000 little-endian
  EXPECT_EQ(bytes[20], 0x00);
  EXPECT_EQ(bytes[23], 0x3f);
  EXPECT_EQ(bytes[27], 0x80);  // sign bit of -0.0f
}

TEST(AcetFormat, RoundTripIsBitExact) {
  std::mt19937_64 rng(9);
  auto t = random_tensor<float>({2, 3, 4, 5}, rng, -1e6, 1e6);
  auto special = Tensor<float>(Shape{5}, {std::numeric_limits<float>::denorm_min(), -0.0f, std::numeric_limits<float>::infinity(),
                                          std::numeric_limits<float>::quiet_NaN(), 3.0f});
  const auto dir = std::filesystem::temp_directory_path() / "acenet_test_acet";
  std::filesystem::create_directories(dir);
  for (const auto& src : {t, special}) {
    write_acet(dir / "t.acet", src);
    auto back = read_acet(dir / "t.acet");
    ASSERT_EQ(back.shape(), src.shape());
    for (std::size_t i = 0; i < src.numel(); ++i) EXPECT_EQ(std::bit_cast<std::uint32_t>(back[i]), std::bit_cast<std::uint32_t>(src[i]));
  }
  std::filesystem::remove_all(dir);
}

TEST(AcetFormat, MalformedInputIsAnIoError) {
  auto bytes = encode_acet(Tensor<float>(Shape{3}, {1, 2, 3}));
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_THROW(decode_acet(truncated), IoError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_acet(bad_magic), IoError);
  auto bad_version = bytes;
  bad_version[4] = 2;
  EXPECT_THROW(decode_acet(bad_version), IoError);
  EXPECT_THROW(read_acet("/nonexistent/dir/x.acet"), IoError);
}
