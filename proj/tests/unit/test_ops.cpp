#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <utility>

#include "fgrad/errors.hpp"
#include "fgrad/ops.hpp"
#include "support/oracles.hpp"

using namespace fgrad;

namespace {

constexpr int kCases = 100;
constexpr double kKernelTol = 1e-12;

}  // namespace

TEST(Matmul, IdentityAndHandExample) {
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor m({2, 2}, {1, 2, 3, 4});
  EXPECT_TRUE(bitwise_equal(ops::matmul(eye, m), m));
  Tensor row({1, 2}, {1, 2});
  Tensor col({2, 1}, {3, 4});
  Tensor out = ops::matmul(row, col);
  EXPECT_EQ(out.shape(), (Shape{1, 1}));
  EXPECT_EQ(out[0], 11.0);
}

TEST(Matmul, MatchesTripleLoopOnRandomShapes) {
  Rng rng(11);
  {
    Tensor a = oracle::random_tensor(rng, {5, 4}), b = oracle::random_tensor(rng, {4, 3});
    EXPECT_LE(oracle::max_abs_diff(ops::matmul(a, b), oracle::naive_matmul(a, b)), kKernelTol);
  }
  for (int c = 0; c < kCases; ++c) {
    const std::size_t m = 1 + rng.below(17), k = 1 + rng.below(13), p = 1 + rng.below(11);
    Tensor a = oracle::random_tensor(rng, {m, k}), b = oracle::random_tensor(rng, {k, p});
    ASSERT_LE(oracle::max_abs_diff(ops::matmul(a, b), oracle::naive_matmul(a, b)), kKernelTol);
  }
}

TEST(Matmul, TransposedVariantsMatchOracle) {
  Rng rng(12);
  for (int c = 0; c < kCases; ++c) {
    const std::size_t m = 1 + rng.below(9), k = 1 + rng.below(9), p = 1 + rng.below(9);
    Tensor a = oracle::random_tensor(rng, {k, m}), b = oracle::random_tensor(rng, {k, p});
    Tensor at({m, k});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t r = 0; r < k; ++r) at.mutable_data()[i * k + r] = a[r * m + i];
    ASSERT_LE(oracle::max_abs_diff(ops::matmul_tn(a, b), oracle::naive_matmul(at, b)), kKernelTol);
    Tensor x = oracle::random_tensor(rng, {m, k}), y = oracle::random_tensor(rng, {p, k});
    Tensor yt({k, p});
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t r = 0; r < k; ++r) yt.mutable_data()[r * p + j] = y[j * k + r];
    ASSERT_LE(oracle::max_abs_diff(ops::matmul_nt(x, y), oracle::naive_matmul(x, yt)), kKernelTol);
  }
}

TEST(Matmul, ShapesSpanningSeveralTiles) {
  Rng rng(13);
  const std::pair<Shape, Shape> cases[] = {
      {{13, 300}, {300, 601}}, {{4, 129}, {129, 257}}, {{1, 1}, {1, 700}}, {{70, 3}, {3, 5}}};
  for (const auto& [sa, sb] : cases) {
    Tensor a = oracle::random_tensor(rng, sa), b = oracle::random_tensor(rng, sb);
    EXPECT_LE(oracle::max_abs_diff(ops::matmul(a, b), oracle::naive_matmul(a, b)), 1e-11);
  }
}

TEST(MatmulJvp, PrimalBitwiseAndTangentMatchesProductRule) {
  Rng rng(14);
  for (int c = 0; c < kCases; ++c) {
    const std::size_t m = 1 + rng.below(9), k = 1 + rng.below(140), p = 1 + rng.below(9);
    Tensor a = oracle::random_tensor(rng, {m, k}), ad = oracle::random_tensor(rng, {m, k});
    Tensor b = oracle::random_tensor(rng, {k, p}), bd = oracle::random_tensor(rng, {k, p});
    const int which = c % 3;  // both tangents, only a's, only b's
    const Tensor a_dot = which == 2 ? Tensor() : ad, b_dot = which == 1 ? Tensor() : bd;
    const ops::DualResult r = ops::matmul_jvp(a, a_dot, b, b_dot);
    ASSERT_TRUE(bitwise_equal(r.primal, ops::matmul(a, b)));
    Tensor want({m, p});
    if (!a_dot.empty()) want = oracle::naive_matmul(a_dot, b);
    if (!b_dot.empty()) {
      const Tensor term = oracle::naive_matmul(a, b_dot);
      for (std::size_t i = 0; i < want.numel(); ++i) want.mutable_data()[i] += term[i];
    }
    ASSERT_LE(oracle::max_abs_diff(r.tangent, want), 1e-11);
  }
  const ops::DualResult none = ops::matmul_jvp(Tensor({2, 3}), Tensor(), Tensor({3, 2}), Tensor());
  EXPECT_TRUE(none.tangent.empty());
  EXPECT_THROW(ops::matmul_jvp(Tensor({2, 3}), Tensor({3, 2}), Tensor({3, 2}), Tensor()),
               DimensionError);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    ops::matmul(Tensor({2, 3}), Tensor({4, 5}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos);
    EXPECT_NE(msg.find("[4x5]"), std::string::npos);
  }
}

TEST(Conv2d, OnesAndZeros) {
  Tensor ones = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor out = ops::conv2d(ones, ones);
  EXPECT_EQ(out.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(out[0], 9.0);

  Rng rng(4);
  Tensor x = oracle::random_tensor(rng, {2, 3, 6, 7});
  Tensor zero = ops::conv2d(x, Tensor({2, 3, 3, 3}));
  for (double v : zero.data()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2d, IsCrossCorrelation) {
  // A kernel with a single 1 at (0,0) selects the top-left of each window:
  // no flip.
  Tensor x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor k({1, 1, 3, 3}, {1, 0, 0, 0, 0, 0, 0, 0, 0});
  EXPECT_EQ(ops::conv2d(x, k)[0], 1.0);
}

TEST(Conv2d, MatchesSevenLoopOracle) {
  Rng rng(5);
  {
    Tensor x = oracle::random_tensor(rng, {2, 3, 8, 8}), k = oracle::random_tensor(rng, {4, 3, 3, 3});
    EXPECT_LE(oracle::max_abs_diff(ops::conv2d(x, k), oracle::naive_conv2d(x, k)), kKernelTol);
  }
  for (int c = 0; c < kCases; ++c) {
    const std::size_t n = 1 + rng.below(2), ci = 1 + rng.below(3), co = 1 + rng.below(3);
    const std::size_t h = 3 + rng.below(5), w = 3 + rng.below(5);
    Tensor x = oracle::random_tensor(rng, {n, ci, h, w}), k = oracle::random_tensor(rng, {co, ci, 3, 3});
    ASSERT_LE(oracle::max_abs_diff(ops::conv2d(x, k), oracle::naive_conv2d(x, k)), kKernelTol);
  }
}

TEST(Conv2d, BackwardKernelsAreAdjointsOfForward) {
  // <conv(x, k), y> = <x, input_grad(y, k)> = <k, kernel_grad(x, y)>
  Rng rng(6);
  for (int c = 0; c < kCases; ++c) {
    Tensor x = oracle::random_tensor(rng, {2, 2, 5, 6}), k = oracle::random_tensor(rng, {3, 2, 3, 3});
    Tensor y = oracle::random_tensor(rng, {2, 3, 3, 4});
    const double lhs = ops::dot(ops::conv2d(x, k), y);
    EXPECT_NEAR(lhs, ops::dot(x, ops::conv2d_input_grad(y, k, x.shape())), 1e-10);
    EXPECT_NEAR(lhs, ops::dot(k, ops::conv2d_kernel_grad(x, y, k.shape())), 1e-10);
  }
}

TEST(Conv2dJvp, PrimalBitwiseAndTangentMatchesProductRule) {
  Rng rng(22);
  for (int c = 0; c < kCases; ++c) {
    const std::size_t n = 1 + rng.below(2), ci = 1 + rng.below(3), co = 1 + rng.below(5);
    const std::size_t h = 3 + rng.below(5), w = 3 + rng.below(5);
    Tensor x = oracle::random_tensor(rng, {n, ci, h, w}), xd = oracle::random_tensor(rng, {n, ci, h, w});
    Tensor k = oracle::random_tensor(rng, {co, ci, 3, 3}), kd = oracle::random_tensor(rng, {co, ci, 3, 3});
    const int which = c % 3;
    const Tensor x_dot = which == 2 ? Tensor() : xd, k_dot = which == 1 ? Tensor() : kd;
    const ops::DualResult r = ops::conv2d_jvp(x, x_dot, k, k_dot);
    ASSERT_TRUE(bitwise_equal(r.primal, ops::conv2d(x, k)));
    Tensor want(r.primal.shape());
    if (!x_dot.empty()) want = oracle::naive_conv2d(x_dot, k);
    if (!k_dot.empty()) {
      const Tensor term = oracle::naive_conv2d(x, k_dot);
      for (std::size_t i = 0; i < want.numel(); ++i) want.mutable_data()[i] += term[i];
    }
    ASSERT_LE(oracle::max_abs_diff(r.tangent, want), kKernelTol);
  }
  EXPECT_THROW(ops::conv2d_jvp(Tensor({1, 1, 4, 4}), Tensor({1, 1, 4, 3}), Tensor({1, 1, 3, 3}),
                               Tensor()),
               DimensionError);
}

TEST(Conv2d, Errors) {
  EXPECT_THROW(ops::conv2d(Tensor({1, 1, 2, 5}), Tensor({1, 1, 3, 3})), DimensionError);
  EXPECT_THROW(ops::conv2d(Tensor({1, 2, 5, 5}), Tensor({1, 1, 3, 3})), DimensionError);
  EXPECT_THROW(ops::conv2d(Tensor({1, 1, 5, 5}), Tensor({1, 1, 2, 2})), DimensionError);
}

TEST(MaxPool, SingleWindowAndTies) {
  Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
  auto r = ops::maxpool2d(x);
  EXPECT_EQ(r.output[0], 4.0);
  EXPECT_EQ(r.argmax[0], 3u);

  auto c = ops::maxpool2d(Tensor::full({1, 2, 4, 4}, 7.0));
  // first element of each window: rows 0 and 2, columns 0 and 2
  const std::vector<std::size_t> expect{0, 2, 8, 10, 16, 18, 24, 26};
  EXPECT_EQ(c.argmax, expect);
}

TEST(MaxPool, MatchesWindowScanOracle) {
  Rng rng(7);
  for (int c = 0; c < kCases; ++c) {
    const std::size_t h = 2 * (1 + rng.below(4)), w = 2 * (1 + rng.below(4));
    Tensor x = oracle::random_tensor(rng, {1 + rng.below(2), 1 + rng.below(3), h, w});
    auto got = ops::maxpool2d(x);
    auto want = oracle::naive_maxpool(x);
    ASSERT_TRUE(bitwise_equal(got.output, want.output));
    ASSERT_EQ(got.argmax, want.argmax);
  }
  Tensor six = oracle::random_tensor(rng, {1, 1, 6, 6});
  EXPECT_EQ(ops::maxpool2d(six).argmax, oracle::naive_maxpool(six).argmax);
}

TEST(MaxPool, OddExtentRejected) {
  EXPECT_THROW(ops::maxpool2d(Tensor({1, 1, 3, 4})), DimensionError);
}

TEST(Relu, Examples) {
  Tensor out = ops::relu(Tensor::from({-2, 0, 3}));
  EXPECT_EQ(out[0], 0.0);
  EXPECT_EQ(out[1], 0.0);
  EXPECT_EQ(out[2], 3.0);
  const Tensor dead = ops::relu(Tensor::full({4, 4}, -1.5));
  for (double v : dead.data()) EXPECT_EQ(v, 0.0);
  Rng rng(8);
  for (int c = 0; c < kCases; ++c) {
    Tensor x = oracle::random_tensor(rng, {1 + rng.below(30)});
    Tensor y = ops::relu(x);
    for (std::size_t i = 0; i < x.numel(); ++i) ASSERT_EQ(y[i], std::max(x[i], 0.0));
  }
}

TEST(LogSoftmaxNll, UniformAndSaturated) {
  EXPECT_NEAR(ops::logsoftmax_nll(Tensor::full({3, 10}, 0.7), std::vector<int>{0, 4, 9}),
              std::log(10.0), 1e-15);
  Tensor sat({1, 10});
  sat.mutable_data()[0] = 1000.0;
  EXPECT_NEAR(ops::logsoftmax_nll(sat, std::vector<int>{0}), 0.0, 1e-12);
}

TEST(LogSoftmaxNll, MatchesExtendedPrecisionOracle) {
  Rng rng(9);
  Tensor z = oracle::random_tensor(rng, {4, 10});
  std::vector<int> labels{3, 0, 9, 5};
  EXPECT_NEAR(ops::logsoftmax_nll(z, labels), oracle::naive_nll(z, labels), 1e-12);
  for (int c = 0; c < kCases; ++c) {
    const std::size_t b = 1 + rng.below(6), k = 2 + rng.below(9);
    Tensor zz = oracle::random_tensor(rng, {b, k}, 3.0);
    std::vector<int> ll(b);
    for (auto& l : ll) l = static_cast<int>(rng.below(k));
    ASSERT_NEAR(ops::logsoftmax_nll(zz, ll), oracle::naive_nll(zz, ll), 1e-12);
  }
}

TEST(LogSoftmaxNll, LabelOutOfRange) {
  EXPECT_THROW(ops::logsoftmax_nll(Tensor({2, 3}), std::vector<int>{0, 3}), IndexError);
  EXPECT_THROW(ops::logsoftmax_nll(Tensor({2, 3}), std::vector<int>{-1, 0}), IndexError);
  EXPECT_THROW(ops::logsoftmax_nll(Tensor({2, 3}), std::vector<int>{0}), DimensionError);
}

TEST(LogSoftmaxNll, GradientRowsSumToZero) {
  Rng rng(10);
  Tensor z = oracle::random_tensor(rng, {5, 7});
  std::vector<int> labels{0, 1, 2, 3, 6};
  Tensor g = ops::logsoftmax_nll_grad(z, labels);
  for (std::size_t b = 0; b < 5; ++b) {
    double s = 0.0;
    for (std::size_t j = 0; j < 7; ++j) s += g[b * 7 + j];
    EXPECT_NEAR(s, 0.0, 1e-15);
  }
}

TEST(Elementwise, BiasAndRowSums) {
  Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from({10, 20, 30});
  Tensor y = ops::add_bias(x, b);
  EXPECT_EQ(y[0], 11.0);
  EXPECT_EQ(y[5], 36.0);
  Tensor s = ops::sum_rows(x);
  EXPECT_EQ(s[0], 5.0);
  EXPECT_EQ(s[2], 9.0);
  EXPECT_THROW(ops::add_bias(x, Tensor::from({1, 2})), DimensionError);
  EXPECT_THROW(ops::add(x, b), DimensionError);
}
