#include <gtest/gtest.h>

#include <cmath>

#include "fgrad/errors.hpp"
#include "fgrad/nn.hpp"
#include "fgrad/optim/fgd.hpp"
#include "fgrad/optim/sgd.hpp"
#include "fgrad/testfuncs.hpp"

using namespace fgrad;
using optim::OptState;

namespace {

fwdad::Perturbation forced(std::initializer_list<double> v) { return {Tensor::from(v)}; }

ParamSet scalar_param(double x) {
  ParamSet p;
  p.add("x", Tensor::from({x}));
  return p;
}

}  // namespace

TEST(LearningRate, Schedule) {
  OptState s(2e-4, 1e-4, 0);
  EXPECT_EQ(optim::lr(s), 2e-4);
  s.step = 10'000;
  EXPECT_NEAR(optim::lr(s), 7.3576e-5, 1e-9);
  EXPECT_DOUBLE_EQ(optim::lr(s), 2e-4 * std::exp(-1.0));
  OptState flat(0.01, 0.0, 0);
  flat.step = 123'456;
  EXPECT_EQ(optim::lr(flat), 0.01);
}

TEST(LearningRate, InvalidConfigRejected) {
  EXPECT_THROW(OptState(0.0, 1e-4, 0), ContractError);
  EXPECT_THROW(OptState(1e-3, -1.0, 0), ContractError);
}

TEST(FgdStep, HandExample) {
  auto f = [](auto p) { return add(p[0], scale(p[1], 2.0)); };
  ParamSet p = testfuncs::make_params({0, 0});
  OptState s(0.1, 0.0, 0);
  const auto r = optim::fgd_step_along(f, p, s, forced({1, 1}));
  EXPECT_EQ(r.derivative, 3.0);
  EXPECT_DOUBLE_EQ(p[0][0], -0.3);
  EXPECT_DOUBLE_EQ(p[1][0], -0.3);
  EXPECT_EQ(s.step, 1u);
}

TEST(FgdStep, NegativeDerivativeReversesDirection) {
  auto f = [](auto p) { return scale(p[0], -1.0); };
  ParamSet p = scalar_param(0.0);
  OptState s(0.5, 0.0, 0);
  const auto r = optim::fgd_step_along(f, p, s, forced({1}));
  EXPECT_EQ(r.derivative, -1.0);
  EXPECT_GT(p[0][0], 0.0);
}

TEST(FgdStep, MeanUpdateAlignsWithNegativeGradient) {
  constexpr int trials = 10'000;
  auto f = testfuncs::program(testfuncs::Kind::kBeale);
  const testfuncs::Point start{1.5, -0.1};
  const auto grad = testfuncs::beale_gradient(start[0], start[1]);
  OptState s(0.01, 0.0, 42);
  double mean[2] = {0, 0};
  for (int t = 0; t < trials; ++t) {
    ParamSet p = testfuncs::make_params(start);
    optim::fgd_step(f, p, s);
    mean[0] += (p[0][0] - start[0]) / trials;
    mean[1] += (p[1][0] - start[1]) / trials;
  }
  const double cosine = -(mean[0] * grad[0] + mean[1] * grad[1]) /
                        (std::hypot(mean[0], mean[1]) * std::hypot(grad[0], grad[1]));
  EXPECT_GT(cosine, 0.9);
}

TEST(SgdStep, QuadraticHandExample) {
  auto f = [](auto p) { return mul(p[0], p[0]); };
  ParamSet p = scalar_param(3.0);
  OptState s(0.1, 0.0, 0);
  optim::sgd_step(f, p, s);
  EXPECT_DOUBLE_EQ(p[0][0], 2.4);
}

TEST(SgdStep, DescentOnConvexQuadratic) {
  auto f = [](auto p) { return add(square(p[0]), scale(square(p[1]), 10.0)); };
  ParamSet p = testfuncs::make_params({4, -3});
  OptState s(0.05, 0.0, 0);
  double prev = evaluate(f, p);
  for (int i = 0; i < 200; ++i) {
    optim::sgd_step(f, p, s);
    const double now = evaluate(f, p);
    ASSERT_LE(now, prev);
    prev = now;
  }
}

TEST(EvaluationCounts, PerStep) {
  auto f = testfuncs::program(testfuncs::Kind::kRosenbrock);
  ParamSet p = testfuncs::make_params({-1, 1});
  OptState s(5e-4, 0.0, 1);
  for (int i = 0; i < 5; ++i) {
    instrument::reset();
    optim::fgd_step(f, p, s);
    EXPECT_EQ(instrument::counters().forward_evaluations, 1u);
    EXPECT_EQ(instrument::counters().backward_passes, 0u);
    instrument::reset();
    optim::sgd_step(f, p, s);
    EXPECT_EQ(instrument::counters().forward_evaluations, 1u);
    EXPECT_EQ(instrument::counters().backward_passes, 1u);
  }
}

TEST(Determinism, SameSeedSameTrajectory) {
  auto run = [](std::uint64_t seed) {
    Rng init_rng(1);
    const auto spec = nn::ModelSpec::mlp(8, 4, 3);
    ParamSet p = nn::init(spec, init_rng);
    Tensor images = rand_uniform(init_rng, {6, 16}, 0.0, 1.0);
    std::vector<int> labels{0, 1, 2, 0, 1, 2};
    auto f = nn::loss_program(spec, images, labels);
    OptState s(0.05, optim::kDefaultDecay, seed);
    for (int i = 0; i < 50; ++i) optim::fgd_step(f, p, s);
    return p.flatten();
  };
  EXPECT_TRUE(bitwise_equal(run(7), run(7)));
  EXPECT_FALSE(bitwise_equal(run(7), run(8)));
}
