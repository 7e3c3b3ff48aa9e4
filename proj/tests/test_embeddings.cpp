// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "helpers.hpp"
#include "mmt/embeddings.hpp"
#include "mmt/error.hpp"
#include "mmt/gradcheck.hpp"

namespace mmt {
namespace {

using m2::EntityKind;

ParameterStore<double> tables(Feedback fb = Feedback::Implicit, double mean = 0.0, std::uint64_t seed = 1) {
  ParameterStore<double> store;
  std::mt19937_64 rng(seed);
  m2::init(store, "d", 6, 4, 3, fb, mean, rng);
  return store;
}

TEST(Lookup, ReturnsInitializedRows) {
  auto store = tables();
  const std::vector<int> ids{4, 0, 4};
  Graph<double> g;
  const Tensor<double> out = g.value(m2::lookup(g, store, "d", EntityKind::User, ids));
  const auto& table = store.at(m2::table("d", EntityKind::User)).value;
  ASSERT_EQ(out.rows(), 3u);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(out.at(r, c), table.at(std::size_t(ids[r]), c));
  }
}

TEST(Lookup, GradientTouchesOnlyUsedRows) {
  auto store = tables();
  const std::vector<int> ids{3};
  Graph<double> g;
  g.backward(g.sum(g.square(m2::lookup(g, store, "d", EntityKind::User, ids))));
  const auto& p = store.at(m2::table("d", EntityKind::User));
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      if (r == 3) {
        EXPECT_DOUBLE_EQ(p.grad.at(r, c), 2.0 * p.value.at(r, c));
      } else {
        EXPECT_EQ(p.grad.at(r, c), 0.0);
      }
    }
  }
  for (double v : store.at(m2::table("d", EntityKind::Item)).grad.values()) EXPECT_EQ(v, 0.0);
}

TEST(Lookup, RepeatedIdsAccumulate) {
  auto store = tables();
  const std::vector<int> ids{2, 2};
  const auto weights = Tensor<double>::matrix({{1.0, -2.0, 0.5}, {3.0, 0.25, -1.0}});
  const auto loss = [&](Graph<double>& g) {
    return g.sum(g.mul(g.tanh(m2::lookup(g, store, "d", EntityKind::Item, ids)), g.constant(weights)));
  };
  const auto c = check_gradients("shared row", store, loss, [](const std::string&) { return true; }, 1e-6, 1e-7);
  EXPECT_TRUE(c.passed) << c.max_rel_error;
  {
    Graph<double> g;
    g.backward(loss(g));
  }
  const auto& p = store.at(m2::table("d", EntityKind::Item));
  for (std::size_t k = 0; k < 3; ++k) {
    const double d = 1.0 - std::pow(std::tanh(p.value.at(2, k)), 2);
    EXPECT_NEAR(p.grad.at(2, k), d * (weights.at(0, k) + weights.at(1, k)), 1e-14);
  }
}

TEST(Lookup, OutOfRangeIsIndexError) {
  auto store = tables();
  Graph<double> g;
  const std::vector<int> bad{6};
  const std::vector<int> negative{-1};
  EXPECT_THROW(m2::lookup(g, store, "d", EntityKind::User, bad), IndexError);
  EXPECT_THROW(m2::lookup(g, store, "d", EntityKind::User, negative), IndexError);
  EXPECT_THROW(m2::lookup(g, store, "other", EntityKind::User, std::vector<int>{0}), StateError);
}

TEST(Init, ImplicitHasNoBiases) {
  const auto store = tables(Feedback::Implicit);
  EXPECT_EQ(store.size(), 2u);
  EXPECT_FALSE(store.contains(m2::global_bias("d")));
  EXPECT_FALSE(store.contains(m2::bias("d", EntityKind::User)));
}

TEST(Init, ExplicitBiasesStartAtZeroAndMean) {
  const auto store = tables(Feedback::Explicit, 3.0);
  EXPECT_EQ(store.at(m2::global_bias("d")).value[0], 3.0);
  for (double v : store.at(m2::bias("d", EntityKind::User)).value.values()) EXPECT_EQ(v, 0.0);
  for (double v : store.at(m2::bias("d", EntityKind::Item)).value.values()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(store.at(m2::bias("d", EntityKind::Item)).value.rows(), 4u);
}

TEST(Init, GlobalBiasIsTrainMean) {
  std::vector<Interaction> rows;
  for (int i = 0; i < 10; ++i) rows.push_back({i % 3, i % 2, {0.1f, 0.2f, 0.3f}, 3.0f});
  auto ds = split(test::dataset("toy", 3, 2, 3, Feedback::Explicit, rows), 1);
  MmtModel<double> model(test::small_model(ds), 1);
  model.add_domain(ds, 2);
  EXPECT_EQ(model.store.at(m2::global_bias("toy")).value[0], 3.0);
}

TEST(Init, NormalScale) {
  ParameterStore<double> store;
  std::mt19937_64 rng(3);
  m2::init(store, "big", 2000, 2000, 10, Feedback::Implicit, 0.0, rng);
  const auto& v = store.at(m2::table("big", EntityKind::User)).value;
  const double mean = std::accumulate(v.values().begin(), v.values().end(), 0.0) / double(v.size());
  double var = 0.0;
  for (double x : v.values()) var += (x - mean) * (x - mean);
  var /= double(v.size());
  EXPECT_NEAR(mean, 0.0, 0.005);
  EXPECT_NEAR(std::sqrt(var), 0.1, 0.005);
}

TEST(Init, SeededDeterminism) {
  const auto a = tables(Feedback::Explicit, 2.0, 7);
  const auto b = tables(Feedback::Explicit, 2.0, 7);
  const auto c = tables(Feedback::Explicit, 2.0, 8);
  EXPECT_EQ(a.at(m2::table("d", EntityKind::User)).value, b.at(m2::table("d", EntityKind::User)).value);
  EXPECT_NE(a.at(m2::table("d", EntityKind::User)).value, c.at(m2::table("d", EntityKind::User)).value);
}

TEST(Init, PositiveSizesRequired) {
  ParameterStore<double> store;
  std::mt19937_64 rng(1);
  EXPECT_THROW(m2::init(store, "d", 0, 3, 2, Feedback::Implicit, 0.0, rng), ConfigError);
  EXPECT_THROW(m2::init(store, "d", 3, 3, 0, Feedback::Implicit, 0.0, rng), ConfigError);
}

TEST(Init, SameDimensionForUsersAndItems) {
  const auto store = tables();
  EXPECT_EQ(store.at(m2::table("d", EntityKind::User)).value.cols(),
            store.at(m2::table("d", EntityKind::Item)).value.cols());
}

std::vector<std::size_t> argsort(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  return idx;
}

TEST(RankInvariance, GlobalBiasShiftsEveryPrediction) {
  const auto ds = test::random_dataset("r", 5, 12, 6, 60, Feedback::Explicit, 2);
  MmtModel<double> model(test::small_model(ds), 3);
  model.add_domain(ds, 4);
  CandidateBatch<double> batch(6);
  const auto& ctx = ds.interactions[0].context;
  for (int v = 0; v < 12; ++v) batch.push(1, v, ctx);
  const auto before = model.score("r", batch);
  const double k = 0.75;
  model.store.at(m2::global_bias("r")).value[0] += k;
  const auto after = model.score("r", batch);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_NEAR(after[i] - before[i], k, 1e-12);
  EXPECT_EQ(argsort(before), argsort(after));
}

}  // namespace
}  // namespace mmt
