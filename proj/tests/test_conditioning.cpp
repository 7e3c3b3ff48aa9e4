// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "mmt/conditioning.hpp"
#include "mmt/error.hpp"
#include "mmt/gradcheck.hpp"

namespace mmt {
namespace {

using m2::EntityKind;

TEST(Condition, ZeroGateHalvesEmbedding) {
  const auto e = Tensor<double>::vector({1.0, -2.0, 4.0});
  const auto out = m3::condition(e, Tensor<double>::vector({0.3, 0.9}), Tensor<double>({3, 2}));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(out[i], 0.5 * e[i]);
}

TEST(Condition, ZeroEmbeddingStaysZero) {
  const auto out = m3::condition(Tensor<double>({2}), Tensor<double>::vector({0.3, 0.9}),
                                 Tensor<double>::matrix({{5, -1}, {2, 2}}));
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(Condition, HandCase) {
  const auto out = m3::condition(Tensor<double>::vector({1, 2}), Tensor<double>::vector({0, std::log(3.0)}),
                                 Tensor<double>::matrix({{1, 0}, {0, 1}}));
  EXPECT_NEAR(out[0], 0.5, 1e-15);
  EXPECT_NEAR(out[1], 1.5, 1e-15);
}

TEST(Condition, ShapeMismatch) {
  EXPECT_THROW(m3::condition(Tensor<double>::vector({1, 2}), Tensor<double>::vector({1, 2, 3}),
                             Tensor<double>({2, 2})),
               DimensionError);
}

TEST(Condition, GateIsBounded) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor<double> e({5}), pooled({4}), w({5, 4});
    for (auto* t : {&e, &pooled, &w}) {
      for (auto& x : t->values()) x = n(rng);
    }
    const auto out = m3::condition(e, pooled, w);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_LE(std::abs(out[i]), std::abs(e[i]));
  }
}

TEST(Condition, DistinctContextsGiveDistinctOutputs) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor<double> e({6}), w({6, 5}), a({5}), b({5});
    for (auto* t : {&e, &w}) {
      for (auto& x : t->values()) x = n(rng);
    }
    for (auto* t : {&a, &b}) {
      for (auto& x : t->values()) x = u(rng);
    }
    const auto ya = m3::condition(e, a, w);
    const auto yb = m3::condition(e, b, w);
    double diff = 0.0;
    for (std::size_t i = 0; i < 6; ++i) diff = std::max(diff, std::abs(ya[i] - yb[i]));
    EXPECT_GT(diff, 1e-6);
  }
}

ModelConfig tower_config(std::size_t depth, std::size_t d = 3) {
  ModelConfig mc;
  mc.segments = {1, 2, 3};
  mc.embedding_dim = d;
  mc.n_u = depth;
  mc.n_v = depth;
  return mc;
}

ParameterStore<double> shared(const ModelConfig& mc, std::uint64_t seed = 1) {
  ParameterStore<double> store;
  std::mt19937_64 rng(seed);
  m3::init(store, mc, rng);
  return store;
}

TEST(Tower, DepthOneIsPassThrough) {
  const auto mc = tower_config(1);
  auto store = shared(mc);
  EXPECT_TRUE(store.names_with_prefix("m3.user").empty());
  Graph<double> g;
  const auto x = Tensor<double>::matrix({{-1.0, 2.0, 0.5}});
  EXPECT_EQ(g.value(m3::tower(g, store, EntityKind::User, 1, g.constant(x))), x);
}

TEST(Tower, IdentityLayerOnNonNegativeInput) {
  const auto mc = tower_config(2);
  auto store = shared(mc);
  auto& w = store.at(m3::tower_weight(EntityKind::Item, 2)).value;
  w.fill(0.0);
  for (std::size_t i = 0; i < 3; ++i) w.at(i, i) = 1.0;
  Graph<double> g;
  const auto x = Tensor<double>::matrix({{0.0, 2.0, 0.5}});
  EXPECT_EQ(g.value(m3::tower(g, store, EntityKind::Item, 2, g.constant(x))), x);
}

TEST(Tower, TwoLayersMatchStepOracle) {
  const auto mc = tower_config(3);
  auto store = shared(mc, 5);
  store.at(m3::tower_bias(EntityKind::User, 2)).value = Tensor<double>::vector({0.1, -0.3, 0.2});
  store.at(m3::tower_bias(EntityKind::User, 3)).value = Tensor<double>::vector({-0.2, 0.4, 0.0});
  const std::vector<double> x{0.7, -1.2, 0.4};
  auto layer = [&](const std::vector<double>& in, std::size_t n) {
    const auto& w = store.at(m3::tower_weight(EntityKind::User, n)).value;
    const auto& b = store.at(m3::tower_bias(EntityKind::User, n)).value;
    std::vector<double> out(3);
    for (std::size_t i = 0; i < 3; ++i) {
      double acc = b[i];
      for (std::size_t j = 0; j < 3; ++j) acc += w.at(i, j) * in[j];
      out[i] = std::max(acc, 0.0);
    }
    return out;
  };
  const auto expect = layer(layer(x, 2), 3);
  Graph<double> g;
  const Tensor<double> in({1, 3}, x);
  const auto& out = g.value(m3::tower(g, store, EntityKind::User, 3, g.constant(in)));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(out[i], expect[i], 1e-15);
}

TEST(Init, ShapesAndRanges) {
  auto mc = tower_config(3, 8);
  mc.segments = {2, 4, 6};
  const auto store = shared(mc);
  const auto& gate = store.at(m3::gate(EntityKind::User)).value;
  EXPECT_EQ(gate.shape(), (std::vector<std::size_t>{8, 6}));
  for (double v : gate.values()) EXPECT_LE(std::abs(v), 1.0 / std::sqrt(6.0));
  const auto& w = store.at(m3::tower_weight(EntityKind::Item, 3)).value;
  EXPECT_EQ(w.shape(), (std::vector<std::size_t>{8, 8}));
  for (double v : w.values()) EXPECT_LE(std::abs(v), std::sqrt(2.0 / 8.0));
  for (double v : store.at(m3::tower_bias(EntityKind::Item, 2)).value.values()) EXPECT_EQ(v, 0.0);
  EXPECT_FALSE(store.contains(m3::tower_weight(EntityKind::Item, 1)));
}

struct Fixture {
  ModelConfig mc;
  ParameterStore<double> store;
  Fixture(std::size_t depth, std::uint64_t seed) : mc(tower_config(depth, 4)) {
    std::mt19937_64 rng(seed);
    m3::init(store, mc, rng);
    m2::init(store, "d", 3, 3, 4, Feedback::Implicit, 0.0, rng);
  }
};

TEST(Represent, ZeroGatesNoTowersHalveEmbeddings) {
  Fixture f(1, 2);
  f.store.at(m3::gate(EntityKind::User)).value.fill(0.0);
  f.store.at(m3::gate(EntityKind::Item)).value.fill(0.0);
  const std::vector<int> users{0, 2}, items{1, 1};
  Graph<double> g;
  const auto pooled = g.constant(Tensor<double>::matrix({{0.2, 0.5, 0.9}, {0.1, 0.1, 0.1}}));
  const auto r = m3::represent(g, f.store, f.mc, "d", users, items, pooled);
  const auto& eu = f.store.at(m2::table("d", EntityKind::User)).value;
  const auto& ev = f.store.at(m2::table("d", EntityKind::Item)).value;
  for (std::size_t row = 0; row < 2; ++row) {
    for (std::size_t k = 0; k < 4; ++k) {
      EXPECT_EQ(g.value(r.user).at(row, k), 0.5 * eu.at(std::size_t(users[row]), k));
      EXPECT_EQ(g.value(r.item).at(row, k), 0.5 * ev.at(std::size_t(items[row]), k));
      EXPECT_EQ(g.value(r.gated_user).at(row, k), g.value(r.user).at(row, k));
      EXPECT_EQ(g.value(r.gated_item).at(row, k), g.value(r.item).at(row, k));
    }
  }
}

TEST(Represent, EqualsManualChain) {
  Fixture f(2, 3);
  const std::vector<int> users{1}, items{2};
  const auto pooled_t = Tensor<double>::vector({0.3, 0.6, 0.2});
  Graph<double> g;
  const auto r = m3::represent(g, f.store, f.mc, "d", users, items, g.constant(Tensor<double>({1, 3}, {0.3, 0.6, 0.2})));

  const auto& eu = f.store.at(m2::table("d", EntityKind::User)).value;
  const Tensor<double> e({4}, std::vector<double>(eu.row(1).begin(), eu.row(1).end()));
  const auto gated = m3::condition(e, pooled_t, f.store.at(m3::gate(EntityKind::User)).value);
  auto tower_in = gated;
  const auto& w = f.store.at(m3::tower_weight(EntityKind::User, 2)).value;
  const auto& b = f.store.at(m3::tower_bias(EntityKind::User, 2)).value;
  auto pre = matvec(w, tower_in);
  const auto with_bias = elementwise(ElementwiseOp::add, pre, &b);
  const auto expect = elementwise(ElementwiseOp::relu, with_bias);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(g.value(r.gated_user)[k], gated[k], 1e-15);
    EXPECT_NEAR(g.value(r.user)[k], expect[k], 1e-15);
  }
}

TEST(Represent, HooksSitBetweenGateAndTower) {
  Fixture f(2, 4);
  const std::vector<int> users{0}, items{0};
  Graph<double> g;
  m3::RepresentOptions opt;
  opt.user_hook = [&](Var x) { return g.scale(x, 0.0); };
  const auto r = m3::represent(g, f.store, f.mc, "d", users, items, g.constant(Tensor<double>({1, 3}, 0.5)), opt);
  for (double v : g.value(r.gated_user).values()) EXPECT_EQ(v, 0.0);
  // relu(W 0 + b) with b = 0.
  for (double v : g.value(r.user).values()) EXPECT_EQ(v, 0.0);
  EXPECT_NE(g.value(r.gated_item)[0], 0.0);
}

TEST(Represent, MismatchedBatch) {
  Fixture f(2, 4);
  Graph<double> g;
  EXPECT_THROW(m3::represent(g, f.store, f.mc, "d", std::vector<int>{0, 1}, std::vector<int>{0},
                             g.constant(Tensor<double>({2, 3}, 0.5))),
               DimensionError);
}

TEST(Represent, FullChainPassesFiniteDifferences) {
  Fixture f(3, 6);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 0.2);
  for (auto& [name, p] : f.store) {
    for (auto& v : p.value.values()) v += n(rng);
  }
  m1::init(f.store, f.mc, rng);
  const std::vector<int> users{0, 1, 2, 1}, items{2, 2, 0, 1};
  Tensor<double> c({4, 3});
  std::uniform_real_distribution<double> u(0.1, 1.0);
  for (auto& v : c.values()) v = u(rng);
  const auto result = check_gradients(
      "represent", f.store,
      [&](Graph<double>& g) {
        const auto ctx = m1::forward(g, f.store, f.mc, g.constant(c));
        const auto r = m3::represent(g, f.store, f.mc, "d", users, items, ctx.pooled);
        return g.add(g.sum(g.row_dot(r.user, r.item)), g.sum(g.square(r.gated_item)));
      },
      [](const std::string&) { return true; }, 1e-5, 1e-6);
  EXPECT_TRUE(result.passed) << result.max_rel_error << " at " << result.worst;
  EXPECT_GT(result.coordinates, 50u);
}

}  // namespace
}  // namespace mmt
