// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "mmt/adam.hpp"
#include "mmt/error.hpp"
#include "mmt/gradcheck.hpp"
#include "mmt/graph.hpp"

namespace mmt {
namespace {

TEST(Matvec, IdentityReturnsInput) {
  const auto w = Tensor<double>::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  const auto x = Tensor<double>::vector({0.5, -2.0, 7.0});
  EXPECT_EQ(matvec(w, x), x);
}

TEST(Matvec, SmallHandCase) {
  const auto y = matvec(Tensor<double>::matrix({{1, 2}, {3, 4}}), Tensor<double>::vector({1, 1}));
  EXPECT_DOUBLE_EQ(y[0], 3.0);
  EXPECT_DOUBLE_EQ(y[1], 7.0);
}

TEST(Matvec, RandomAgainstDoubleLoop) {
  std::mt19937_64 rng(11);
  std::normal_distribution<float> n(0.0f, 1.0f);
  Tensor<float> w({5, 7}), x({7});
  for (auto& v : w.values()) v = n(rng);
  for (auto& v : x.values()) v = n(rng);
  const auto y = matvec(w, x);
  ASSERT_EQ(y.size(), 5u);
  for (std::size_t r = 0; r < 5; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < 7; ++c) acc += double(w.at(r, c)) * double(x[c]);
    EXPECT_NEAR(y[r], acc, 1e-6);
  }
}

TEST(Matvec, ShapeMismatchThrows) {
  EXPECT_THROW(matvec(Tensor<double>({2, 3}), Tensor<double>({2})), DimensionError);
}

TEST(Elementwise, MulByZeroAnnihilates) {
  const auto a = Tensor<double>::vector({3.0, -1.5, 1e6});
  const Tensor<double> z({3});
  const auto y = elementwise(ElementwiseOp::mul, a, &z);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(Elementwise, SigmoidAndTanhAtZero) {
  const Tensor<double> z({4});
  const auto s = elementwise(ElementwiseOp::sigmoid, z);
  const auto t = elementwise(ElementwiseOp::tanh, z);
  for (double v : s.values()) EXPECT_DOUBLE_EQ(v, 0.5);
  for (double v : t.values()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Elementwise, BinaryShapeMismatch) {
  const Tensor<double> a({3}), b({4});
  EXPECT_THROW(elementwise(ElementwiseOp::add, a, &b), DimensionError);
}

TEST(Elementwise, SigmoidIsStableAtExtremes) {
  EXPECT_NEAR(sigmoid(800.0), 1.0, 1e-15);
  EXPECT_NEAR(sigmoid(-800.0), 0.0, 1e-15);
  EXPECT_TRUE(std::isfinite(sigmoid(-800.0)));
}

TEST(Tensor, NonFiniteIsReported) {
  auto t = Tensor<double>::vector({1.0, std::numeric_limits<double>::quiet_NaN()});
  EXPECT_FALSE(t.all_finite());
  EXPECT_THROW(require_finite(t, "t"), NumericError);
}

TEST(Backward, SumGivesOnes) {
  ParameterStore<double> store;
  auto& x = store.add("x", Tensor<double>::vector({1.0, -2.0, 3.0}));
  Graph<double> g;
  g.backward(g.sum(g.param(x)));
  for (double v : x.grad.values()) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Backward, SumOfSquaresGivesTwiceInput) {
  ParameterStore<double> store;
  auto& x = store.add("x", Tensor<double>::vector({1.0, -2.0, 3.0}));
  Graph<double> g;
  const Var v = g.param(x);
  g.backward(g.sum(g.mul(v, v)));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(x.grad[i], 2.0 * x.value[i]);
}

TEST(Backward, TwiceThrows) {
  ParameterStore<double> store;
  auto& x = store.add("x", Tensor<double>::vector({1.0}));
  Graph<double> g;
  const Var loss = g.sum(g.param(x));
  g.backward(loss);
  EXPECT_THROW(g.backward(loss), StateError);
}

TEST(Backward, NeedsScalarLoss) {
  ParameterStore<double> store;
  auto& x = store.add("x", Tensor<double>::vector({1.0, 2.0}));
  Graph<double> g;
  EXPECT_THROW(g.backward(g.param(x)), DimensionError);
}

TEST(Backward, FrozenParameterGetsNoGradient) {
  ParameterStore<double> store;
  auto& x = store.add("x", Tensor<double>::vector({1.0, 2.0}));
  x.trainable = false;
  Graph<double> g;
  g.backward(g.sum(g.param(x)));
  for (double v : x.grad.values()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, GradientsAccumulateAcrossGraphs) {
  ParameterStore<double> store;
  auto& x = store.add("x", Tensor<double>::vector({1.0}));
  for (int k = 0; k < 2; ++k) {
    Graph<double> g;
    g.backward(g.sum(g.param(x)));
  }
  EXPECT_DOUBLE_EQ(x.grad[0], 2.0);
}

TEST(GradCheck, FullModelPassesOnToySizes) {
  GradCheckConfig cfg;
  const auto report = run_gradcheck(cfg);
  ASSERT_FALSE(report.cases.empty());
  for (const auto& c : report.cases) {
    EXPECT_TRUE(c.passed) << c.name << " max rel err " << c.max_rel_error << " at " << c.worst;
    EXPECT_GT(c.coordinates, 0u) << c.name;
  }
}

TEST(GradCheck, DetectsAWrongGradient) {
  ParameterStore<double> store;
  store.add("x", Tensor<double>::vector({0.3, -0.7}));
  // exp() is differentiated correctly; scaling the loss after backward is not.
  bool first = true;
  const auto c = check_gradients(
      "broken", store,
      [&](Graph<double>& g) {
        const Var v = g.sum(g.exp(g.param(store.at("x"))));
        const Var out = first ? g.scale(v, 2.0) : v;
        first = false;
        return out;
      },
      [](const std::string&) { return true; }, 1e-5, 1e-4);
  EXPECT_FALSE(c.passed);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParameterStore<double> store;
  auto& w = store.add("w", Tensor<double>::vector({0.0}));
  w.grad[0] = 1.0;
  AdamConfig cfg;
  cfg.lr = 0.1;
  adam_step(store, cfg);
  EXPECT_NEAR(w.value[0], -0.1, 1e-6);
  EXPECT_EQ(w.grad[0], 0.0);
}

TEST(Adam, ZeroGradientLeavesParameter) {
  ParameterStore<double> store;
  auto& w = store.add("w", Tensor<double>::vector({1.25, -3.0}));
  AdamConfig cfg;
  adam_step(store, cfg);
  EXPECT_EQ(w.value[0], 1.25);
  EXPECT_EQ(w.value[1], -3.0);
}

TEST(Adam, ConvergesOnQuadratic) {
  ParameterStore<double> store;
  auto& w = store.add("w", Tensor<double>::vector({0.0}));
  AdamConfig cfg;
  cfg.lr = 0.1;
  for (int i = 0; i < 100; ++i) {
    Graph<double> g;
    const Var d = g.add_scalar(g.param(w), -3.0);
    g.backward(g.sum(g.square(d)));
    adam_step(store, cfg);
  }
  EXPECT_LT(std::abs(w.value[0] - 3.0), 0.5);
}

TEST(Adam, PolicySkipsParameters) {
  ParameterStore<double> store;
  auto& a = store.add("a", Tensor<double>::vector({0.0}));
  auto& b = store.add("b", Tensor<double>::vector({0.0}));
  a.grad[0] = 1.0;
  b.grad[0] = 1.0;
  AdamConfig cfg;
  adam_step<double>(store, cfg, [](const std::string& n) -> std::optional<double> {
    if (n == "a") return 0.5;
    return std::nullopt;
  });
  EXPECT_NEAR(a.value[0], -0.5, 1e-6);
  EXPECT_EQ(b.value[0], 0.0);
}

TEST(Adam, RejectsBadConfig) {
  AdamConfig cfg;
  cfg.lr = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.lr = 1e-3;
  cfg.beta1 = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Dropout, RateZeroAndEvalModeAreIdentity) {
  std::mt19937_64 rng(1);
  const auto x = Tensor<double>::vector({1.0, 2.0, 3.0});
  EXPECT_EQ(dropout(x, 0.0, rng, true), x);
  EXPECT_EQ(dropout(x, 0.7, rng, false), x);
}

TEST(Dropout, RateOneOrMoreRejected) {
  std::mt19937_64 rng(1);
  const auto x = Tensor<double>::vector({1.0});
  EXPECT_THROW(dropout(x, 1.0, rng, true), ConfigError);
  EXPECT_THROW(dropout(x, 1.5, rng, true), ConfigError);
  Graph<double> g;
  EXPECT_THROW(g.dropout(g.constant(x), 1.0, rng, true), ConfigError);
}

TEST(Dropout, InvertedScalingPreservesMean) {
  std::mt19937_64 rng(5);
  const Tensor<double> x({100000}, 1.0);
  const auto y = dropout(x, 0.5, rng, true);
  double sum = 0.0;
  for (double v : y.values()) {
    EXPECT_TRUE(v == 0.0 || v == 2.0);
    sum += v;
  }
  const double mean = sum / double(y.size());
  EXPECT_GE(mean, 0.98);
  EXPECT_LE(mean, 1.02);
}

TEST(Determinism, SameSeedSameDropoutMask) {
  const Tensor<double> x({1000}, 1.0);
  std::mt19937_64 a(9), b(9);
  EXPECT_EQ(dropout(x, 0.3, a, true), dropout(x, 0.3, b, true));
}

TEST(Graph, NonFiniteForwardValueThrows) {
  Graph<double> g;
  const Var x = g.constant(Tensor<double>::vector({-1.0}));
  EXPECT_THROW(g.log(x), NumericError);
}

}  // namespace
}  // namespace mmt
