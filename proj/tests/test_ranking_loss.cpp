// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "helpers.hpp"
#include "mmt/adam.hpp"
#include "mmt/error.hpp"
#include "mmt/ranking_loss.hpp"

namespace mmt {
namespace {

ParameterStore<double> m4_store(std::size_t width) {
  ModelConfig mc;
  mc.segments = {0, 0, width};
  ParameterStore<double> store;
  m4::init(store, mc);
  return store;
}

Tensor<double> col(std::initializer_list<double> v) {
  return Tensor<double>({v.size(), 1}, std::vector<double>(v));
}

TEST(ContextBias, ZeroPooledGivesBias) {
  auto store = m4_store(3);
  store.at(m4::kWeight).value = Tensor<double>::vector({1.0, -2.0, 5.0});
  store.at(m4::kBias).value[0] = 0.4;
  Graph<double> g;
  EXPECT_EQ(g.value(m4::context_bias(g, store, g.constant(Tensor<double>({2, 3}))))[1], 0.4);
}

TEST(ContextBias, HandCase) {
  auto store = m4_store(2);
  store.at(m4::kWeight).value = Tensor<double>::vector({1.0, 1.0});
  store.at(m4::kBias).value[0] = 0.5;
  Graph<double> g;
  const auto s = g.value(m4::context_bias(g, store, g.constant(Tensor<double>({1, 2}, {0.2, 0.3}))));
  EXPECT_NEAR(s[0], 1.0, 1e-15);
}

TEST(ContextBias, RandomAgainstDotOracle) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  auto store = m4_store(7);
  for (auto& v : store.at(m4::kWeight).value.values()) v = n(rng);
  store.at(m4::kBias).value[0] = n(rng);
  Tensor<double> pooled({5, 7});
  for (auto& v : pooled.values()) v = n(rng);
  Graph<double> g;
  const auto s = g.value(m4::context_bias(g, store, g.constant(pooled)));
  for (std::size_t r = 0; r < 5; ++r) {
    double acc = store.at(m4::kBias).value[0];
    for (std::size_t c = 0; c < 7; ++c) acc += store.at(m4::kWeight).value[c] * pooled.at(r, c);
    EXPECT_NEAR(s[r], acc, 1e-12);
  }
}

TEST(ContextBias, StartsAtZero) {
  const auto store = m4_store(4);
  for (double v : store.at(m4::kWeight).value.values()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(store.at(m4::kBias).value[0], 0.0);
}

TEST(ScoreImplicit, Examples) {
  Graph<double> g;
  const auto u = g.constant(Tensor<double>::matrix({{1, 0}, {1, 1}}));
  const auto v = g.constant(Tensor<double>::matrix({{0, 1}, {1, 1}}));
  const auto s = g.value(m4::score_implicit(g, u, v, g.constant(col({0.0, 0.5}))));
  EXPECT_EQ(s[0], 0.0);
  EXPECT_EQ(s[1], 2.5);
  EXPECT_EQ(g.value(m4::score_implicit(g, u, v, std::nullopt))[1], 2.0);
}

TEST(ScoreImplicit, RandomAgainstOracle) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor<double> u({4, 6}), v({4, 6}), sc({4, 1});
  for (auto* t : {&u, &v, &sc}) {
    for (auto& x : t->values()) x = n(rng);
  }
  Graph<double> g;
  const auto s = g.value(m4::score_implicit(g, g.constant(u), g.constant(v), g.constant(sc)));
  for (std::size_t r = 0; r < 4; ++r) {
    double acc = sc[r];
    for (std::size_t k = 0; k < 6; ++k) acc += u.at(r, k) * v.at(r, k);
    EXPECT_NEAR(s[r], acc, 1e-12);
  }
}

TEST(ScoreExplicit, BiasesOnly) {
  Graph<double> g;
  const auto z = g.constant(Tensor<double>({1, 3}));
  const auto s = g.value(m4::score_explicit(g, z, z, g.constant(col({0.0})), g.constant(col({0.1})),
                                            g.constant(col({0.2})), g.constant(Tensor<double>({1, 1}, 3.0))));
  EXPECT_NEAR(s[0], 3.3, 1e-15);
}

TEST(ScoreExplicit, GlobalShiftAndOracle) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor<double> u({3, 4}), v({3, 4}), sc({3, 1}), su({3, 1}), sv({3, 1});
  for (auto* t : {&u, &v, &sc, &su, &sv}) {
    for (auto& x : t->values()) x = n(rng);
  }
  auto run = [&](double global) {
    Graph<double> g;
    return Tensor<double>(g.value(m4::score_explicit(g, g.constant(u), g.constant(v), g.constant(sc), g.constant(su),
                                                     g.constant(sv), g.constant(Tensor<double>({1, 1}, global)))));
  };
  const auto a = run(3.0);
  const auto b = run(4.25);
  for (std::size_t r = 0; r < 3; ++r) {
    double acc = 3.0 + sc[r] + su[r] + sv[r];
    for (std::size_t k = 0; k < 4; ++k) acc += u.at(r, k) * v.at(r, k);
    EXPECT_NEAR(a[r], acc, 1e-12);
    EXPECT_NEAR(b[r] - a[r], 1.25, 1e-12);
  }
}

LossConfig no_attenuation() {
  LossConfig c;
  c.attenuation_enabled = false;
  return c;
}

TEST(LossImplicit, PerfectScoresGiveZero) {
  auto store = m4_store(2);
  Graph<double> g;
  const auto t = m4::loss_implicit(g, store, no_attenuation(), g.constant(col({1.0, 1.0})),
                                   g.constant(col({0.0, 0.0, 0.0, 0.0})), std::nullopt);
  EXPECT_EQ(g.scalar(t.reported), 0.0);
  EXPECT_EQ(g.scalar(t.objective), 0.0);
}

TEST(LossImplicit, ZeroPositiveScoreGivesOne) {
  auto store = m4_store(2);
  Graph<double> g;
  const auto t = m4::loss_implicit(g, store, no_attenuation(), g.constant(col({0.0})),
                                   g.constant(col({0.0, 0.0})), std::nullopt);
  EXPECT_EQ(g.scalar(t.reported), 1.0);
}

TEST(LossImplicit, TwoInteractionHandSum) {
  auto store = m4_store(2);
  Graph<double> g;
  // Positive scores 0.8 and 1.5; per positive one item and one context negative.
  const auto t = m4::loss_implicit(g, store, no_attenuation(), g.constant(col({0.8, 1.5})),
                                   g.constant(col({0.3, -0.2, 0.6, 0.1})), std::nullopt);
  const double hand = ((0.2 * 0.2 + 0.3 * 0.3 + 0.2 * 0.2) + (0.5 * 0.5 + 0.6 * 0.6 + 0.1 * 0.1)) / 2.0;
  EXPECT_NEAR(g.scalar(t.reported), hand, 1e-12);
}

TEST(LossImplicit, NonNegativeWithoutAttenuation) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 2.0);
  auto store = m4_store(2);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor<double> pos({3, 1}), neg({6, 1});
    for (auto* x : {&pos, &neg}) {
      for (auto& v : x->values()) v = n(rng);
    }
    Graph<double> g;
    EXPECT_GE(g.scalar(m4::loss_implicit(g, store, no_attenuation(), g.constant(pos), g.constant(neg), std::nullopt)
                           .reported),
              0.0);
  }
}

TEST(LossImplicit, AttenuationShapesObjectiveNotReport) {
  auto store = m4_store(2);
  store.at(m4::kWeight).value = Tensor<double>::vector({0.5, -1.0});
  store.at(m4::kBias).value[0] = 0.25;
  LossConfig cfg;
  cfg.attenuation_enabled = true;
  cfg.curriculum_l2 = 0.1;
  Graph<double> g;
  const auto t = m4::loss_implicit(g, store, cfg, g.constant(col({0.8, 1.5})), g.constant(col({0.3, -0.2, 0.6, 0.1})),
                                   g.constant(col({0.4, 0.2})));
  const double reported = g.scalar(t.reported);
  const double penalty = 0.1 * (0.25 + 1.0 + 0.0625);
  EXPECT_NEAR(g.scalar(t.objective), reported - 0.3 + penalty, 1e-12);
  EXPECT_THROW(m4::loss_implicit(g, store, cfg, g.constant(col({1.0})), g.constant(col({0.0})), std::nullopt),
               StateError);
}

TEST(LossImplicit, AttenuationOffWhenContextBiasDisabled) {
  auto store = m4_store(2);
  LossConfig cfg;
  cfg.attenuation_enabled = true;
  cfg.context_bias_enabled = false;
  Graph<double> g;
  const auto t = m4::loss_implicit(g, store, cfg, g.constant(col({0.5})), g.constant(col({0.5})), std::nullopt);
  EXPECT_EQ(g.scalar(t.objective), g.scalar(t.reported));
}

TEST(LossExplicit, Examples) {
  auto store = m4_store(2);
  Graph<double> g;
  const auto r = g.constant(col({4.0, 2.0, 3.5}));
  EXPECT_EQ(g.scalar(m4::loss_explicit(g, store, no_attenuation(), r, r, std::nullopt).reported), 0.0);
  EXPECT_EQ(g.scalar(m4::loss_explicit(g, store, no_attenuation(), g.constant(col({3.0})), g.constant(col({4.0})),
                                       std::nullopt)
                         .reported),
            1.0);
  const auto t = m4::loss_explicit(g, store, no_attenuation(), g.constant(col({3.0, 2.5, 5.0})), r, std::nullopt);
  EXPECT_NEAR(g.scalar(t.reported), (1.0 + 0.25 + 2.25) / 3.0, 1e-15);
}

TEST(LossExplicit, AttenuationSubtractsMeanContextBias) {
  auto store = m4_store(2);
  LossConfig cfg;
  cfg.attenuation_enabled = true;
  cfg.curriculum_l2 = 0.0;
  Graph<double> g;
  const auto t = m4::loss_explicit(g, store, cfg, g.constant(col({3.0, 2.0})), g.constant(col({4.0, 2.0})),
                                   g.constant(col({0.2, 0.6})));
  EXPECT_NEAR(g.scalar(t.reported), 0.5, 1e-15);
  EXPECT_NEAR(g.scalar(t.objective), 0.1, 1e-15);
}

TEST(Model, ContextBiasToggleRemovesItFromScores) {
  const auto ds = test::random_dataset("t", 4, 5, 6, 40, Feedback::Implicit, 3);
  auto mc = test::small_model(ds);
  MmtModel<double> on(mc, 1);
  on.add_domain(ds, 2);
  on.store.at(m4::kBias).value[0] = 0.7;
  mc.loss.context_bias_enabled = false;
  MmtModel<double> off(mc, 1);
  off.add_domain(ds, 2);
  off.store.at(m4::kBias).value[0] = 0.7;
  const auto batch = test::batch_of<double>(ds, {0, 1, 2});
  const auto a = on.score("t", batch);
  const auto b = off.score("t", batch);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a[i] - b[i], 0.7, 1e-12);
  Graph<double> g;
  EXPECT_FALSE(off.forward(g, "t", batch).s_c.has_value());
}

TEST(Model, RankingMarginOnSeparableToy) {
  // One user, two items, one positive. The second train row only supplies
  // a context for the context negatives.
  std::vector<Interaction> rows{{0, 0, {0.3f, 0.6f, 0.9f}, {}}, {0, 0, {0.9f, 0.1f, 0.4f}, {}}};
  const auto ds = test::dataset("m", 1, 2, 3, Feedback::Implicit, rows);
  const auto mc = test::small_model(ds, 4);
  MmtModel<double> model(mc, 3);
  model.add_domain(ds, 4);
  AdamConfig adam;
  adam.lr = 0.01;
  std::mt19937_64 rng(5);
  const std::vector<std::size_t> positives{0};
  for (int step = 0; step < 200; ++step) {
    Graph<double> g;
    const auto bl = batch_loss(g, model, ds, positives, rng);
    g.backward(bl.terms.objective);
    adam_step(model.store, adam);
  }
  CandidateBatch<double> b(3);
  b.push(0, 0, ds.interactions[0].context);
  b.push(0, 1, ds.interactions[0].context);
  const auto s = model.score("m", b);
  EXPECT_GT(s[0], s[1]);
}

}  // namespace
}  // namespace mmt
