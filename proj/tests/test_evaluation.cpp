// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <tuple>

#include "helpers.hpp"
#include "mmt/error.hpp"
#include "mmt/evaluation.hpp"

namespace mmt {
namespace {

using Key = std::tuple<int, int, std::vector<float>>;

// Scores an observed (user, item, context) triple far above anything else.
ScoreFn forced_oracle(const DomainDataset& ds) {
  auto observed = std::make_shared<std::set<Key>>();
  for (const auto& t : ds.interactions) observed->insert({t.user, t.item, t.context});
  return [observed](const CandidateBatch<float>& b) {
    std::vector<double> out;
    for (std::size_t i = 0; i < b.size(); ++i) {
      std::vector<float> c(b.contexts.begin() + i * b.width, b.contexts.begin() + (i + 1) * b.width);
      out.push_back(observed->count({b.users[i], b.items[i], c}) ? 1e9 : 0.0);
    }
    return out;
  };
}

ScoreFn random_scorer(std::uint64_t seed) {
  auto rng = std::make_shared<std::mt19937_64>(seed);
  return [rng](const CandidateBatch<float>& b) {
    std::uniform_real_distribution<double> u;
    std::vector<double> out(b.size());
    for (auto& v : out) v = u(*rng);
    return out;
  };
}

// Deterministic in the candidate itself, so batch order cannot matter.
ScoreFn content_scorer() {
  return [](const CandidateBatch<float>& b) {
    std::vector<double> out;
    for (std::size_t i = 0; i < b.size(); ++i) {
      double s = std::sin(1.3 * b.users[i] + 0.7 * b.items[i]);
      for (std::size_t f = 0; f < b.width; ++f) s += 0.1 * b.contexts[i * b.width + f] * double(f + 1);
      out.push_back(s);
    }
    return out;
  };
}

DomainDataset ranking_data() { return test::random_dataset("r", 40, 120, 6, 2500, Feedback::Implicit, 3); }

// Every (user, item) pair occurs once, so no negative repeats an observed triple.
DomainDataset unique_pairs() {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<float> u;
  std::vector<Interaction> rows;
  for (int i = 0; i < 2500; ++i) {
    Interaction t{i % 50, i / 50, {}, {}};
    for (int f = 0; f < 6; ++f) t.context.push_back(u(rng));
    rows.push_back(std::move(t));
  }
  return split(test::dataset("p", 50, 120, 6, Feedback::Implicit, std::move(rows)), 2);
}

TEST(HitRate, ForcedOracleHitsEverything) {
  const auto ds = unique_pairs();
  const auto hr = hit_rate(ds, ds.splits.test, forced_oracle(ds), {1, 5});
  EXPECT_EQ(hr.at(1), 1.0);
  EXPECT_EQ(hr.at(5), 1.0);
}

TEST(HitRate, RandomScoresGiveOneInHundredOne) {
  const auto ds = ranking_data();
  const auto all = test::all_indices(ds);
  const auto hr = hit_rate(ds, all, random_scorer(5), {1, 10});
  const double n = double(all.size());
  const double p1 = 1.0 / 101.0, p10 = 10.0 / 101.0;
  EXPECT_NEAR(hr.at(1), p1, 3.0 * std::sqrt(p1 * (1 - p1) / n));
  EXPECT_NEAR(hr.at(10), p10, 3.0 * std::sqrt(p10 * (1 - p10) / n));
}

TEST(HitRate, ConstantScoresNeverHit) {
  const auto ds = ranking_data();
  const ScoreFn flat = [](const CandidateBatch<float>& b) { return std::vector<double>(b.size(), 0.5); };
  EXPECT_EQ(hit_rate(ds, ds.splits.test, flat, {1, 100}).at(100), 0.0);
  EXPECT_EQ(hit_rate(ds, ds.splits.test, flat, {101}).at(101), 1.0);
}

// Place the positive after every candidate it ties with, then read its position.
std::size_t oracle_rank(const std::vector<double>& s) {
  std::vector<std::size_t> order(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (s[a] != s[b]) return s[a] > s[b];
    return (a == 0 ? 1 : 0) < (b == 0 ? 1 : 0);
  });
  return std::size_t(std::find(order.begin(), order.end(), 0u) - order.begin());
}

TEST(PositiveRank, ExhaustiveOracle) {
  const std::vector<double> levels{0.0, 1.0, 2.0};
  for (std::size_t n = 1; n <= 6; ++n) {
    std::size_t combos = 1;
    for (std::size_t k = 0; k < n; ++k) combos *= levels.size();
    for (std::size_t c = 0; c < combos; ++c) {
      std::vector<double> s;
      for (std::size_t k = 0, r = c; k < n; ++k, r /= levels.size()) s.push_back(levels[r % levels.size()]);
      EXPECT_EQ(positive_rank(s), oracle_rank(s));
    }
  }
  const std::vector<double> micro{0.5, 0.9, 0.1};
  EXPECT_EQ(positive_rank(micro), 1u);
  EXPECT_THROW(positive_rank(std::vector<double>{}), EvalError);
}

TEST(HitRate, MonotoneInK) {
  const auto ds = ranking_data();
  const auto hr = hit_rate(ds, ds.splits.test, content_scorer(), {1, 2, 5, 10, 50, 101});
  double prev = 0.0;
  for (const auto& [k, v] : hr) {
    EXPECT_GE(v, prev) << k;
    prev = v;
  }
  EXPECT_EQ(hr.at(101), 1.0);
}

TEST(HitRate, DeterministicAndOrderIndependent) {
  const auto ds = ranking_data();
  auto pos = ds.splits.test;
  const auto a = hit_rate(ds, pos, content_scorer(), {1, 5}, 100, 9);
  const auto b = hit_rate(ds, pos, content_scorer(), {1, 5}, 100, 9);
  std::reverse(pos.begin(), pos.end());
  const auto c = hit_rate(ds, pos, content_scorer(), {1, 5}, 100, 9);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
}

TEST(HitRate, Errors) {
  const auto ds = ranking_data();
  EXPECT_THROW(hit_rate(ds, std::vector<std::size_t>{}, content_scorer()), EvalError);
  const ScoreFn short_fn = [](const CandidateBatch<float>&) { return std::vector<double>{1.0}; };
  EXPECT_THROW(hit_rate(ds, ds.splits.test, short_fn), EvalError);
  const auto tiny = test::random_dataset("t", 5, 1, 6, 60, Feedback::Implicit, 1);
  EXPECT_THROW(hit_rate(tiny, tiny.splits.test, content_scorer()), EvalError);
}

TEST(ErrorMetrics, Examples) {
  const std::vector<double> t{3.0, 4.0};
  const auto perfect = rmse_mae(t, t);
  EXPECT_EQ(perfect.rmse, 0.0);
  EXPECT_EQ(perfect.mae, 0.0);
  const auto pm = rmse_mae(std::vector<double>{2.0, 5.0}, t);
  EXPECT_DOUBLE_EQ(pm.rmse, 1.0);
  EXPECT_DOUBLE_EQ(pm.mae, 1.0);
  const auto skew = rmse_mae(std::vector<double>{3.0, 2.0}, t);
  EXPECT_DOUBLE_EQ(skew.rmse, std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(skew.mae, 1.0);
  EXPECT_THROW(rmse_mae(std::vector<double>{1.0}, t), EvalError);
  EXPECT_THROW(rmse_mae(std::vector<double>{}, std::vector<double>{}), EvalError);
}

TEST(ErrorMetrics, RmseZeroOnlyForPerfectPredictions) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> p(5), t(5);
    for (std::size_t i = 0; i < 5; ++i) {
      t[i] = n(rng);
      p[i] = trial % 2 ? t[i] : t[i] + n(rng);
    }
    const auto e = rmse_mae(p, t);
    EXPECT_GE(e.rmse, 0.0);
    EXPECT_EQ(e.rmse == 0.0, trial % 2 == 1);
    EXPECT_GE(e.rmse + 1e-15, e.mae);
  }
}

TEST(ModelMetrics, MatchScoreOverTestSplit) {
  const auto ds = test::random_dataset("e", 10, 15, 6, 200, Feedback::Explicit, 4);
  MmtModel<double> model(test::small_model(ds), 1);
  model.add_domain(ds, 2);
  const auto batch = test::batch_of<double>(ds, ds.splits.test);
  const auto pred = model.score("e", batch);
  std::vector<double> truth;
  for (std::size_t i : ds.splits.test) truth.push_back(*ds.interactions[i].rating);
  const auto e = rmse_mae(model, ds);
  const auto expect = rmse_mae(pred, truth);
  EXPECT_DOUBLE_EQ(e.rmse, expect.rmse);
  EXPECT_DOUBLE_EQ(e.mae, expect.mae);
  const auto m = evaluate(model, ds);
  EXPECT_EQ(m.size(), 2u);
  EXPECT_DOUBLE_EQ(m.at("rmse"), expect.rmse);
  EXPECT_DOUBLE_EQ(headline_loss(m), expect.rmse);
}

TEST(ModelMetrics, ImplicitReportsHitRates) {
  const auto ds = ranking_data();
  MmtModel<double> model(test::small_model(ds), 1);
  model.add_domain(ds, 2);
  const auto m = evaluate(model, ds);
  ASSERT_TRUE(m.count("hr@1") && m.count("hr@5"));
  EXPECT_LE(m.at("hr@1"), m.at("hr@5"));
  EXPECT_DOUBLE_EQ(headline_loss(m), 1.0 - m.at("hr@1"));
  EXPECT_THROW(rmse_mae(model, ds), EvalError);
  EXPECT_THROW(headline_loss({{"mae", 1.0}}), EvalError);
}

TEST(ModelMetrics, ScorerAgreesWithModel) {
  const auto ds = ranking_data();
  MmtModel<double> model(test::small_model(ds), 1);
  model.add_domain(ds, 2);
  const std::vector<std::size_t> idx{0, 1, 2, 3, 4};
  const auto direct = model.score("r", test::batch_of<double>(ds, idx));
  const auto via = model_scorer(model, "r")(test::batch_of<float>(ds, idx));
  ASSERT_EQ(direct.size(), via.size());
  for (std::size_t i = 0; i < direct.size(); ++i) EXPECT_NEAR(direct[i], via[i], 1e-6);
}

TEST(Robustness, ZeroFractionHasNoDegradation) {
  const auto ds = test::random_dataset("e", 10, 15, 6, 200, Feedback::Explicit, 4);
  RobustnessConfig rc;
  rc.fractions = {0.2};
  rc.seeds = {1, 2};
  rc.train.max_epochs = 2;
  const auto rows = robustness_sweep(test::small_model(ds), ds, rc);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].fraction, 0.0);
  for (double d : rows[0].degradation) EXPECT_EQ(d, 0.0);
  EXPECT_EQ(rows[0].mean_degradation, 0.0);
  EXPECT_EQ(rows[1].fraction, 0.2);
  ASSERT_EQ(rows[1].metric.size(), 2u);
  for (std::size_t s = 0; s < 2; ++s) {
    EXPECT_NEAR(rows[1].degradation[s], 100.0 * (rows[1].metric[s] - rows[0].metric[s]) / rows[0].metric[s], 1e-9);
  }
}

EvalReport sample_report() {
  EvalReport r;
  r.domain_id = "target1";
  r.method = "drr";
  r.metrics = {{"rmse", 0.91}, {"mae", 0.7}, {"delta_pct", 3.5}};
  r.wall_seconds = 1.25;
  r.epochs = 4;
  r.seed = 3;
  return r;
}

TEST(Reports, JsonRoundTrip) {
  const auto r = sample_report();
  const auto back = EvalReport::from_json(r.to_json());
  EXPECT_EQ(back.domain_id, r.domain_id);
  EXPECT_EQ(back.method, r.method);
  EXPECT_EQ(back.metrics, r.metrics);
  EXPECT_EQ(back.wall_seconds, r.wall_seconds);
  EXPECT_EQ(back.epochs, r.epochs);
  EXPECT_EQ(back.seed, r.seed);
}

TEST(Reports, FilesHaveExpectedLayout) {
  test::TempDir dir;
  const std::vector<EvalReport> reports{sample_report(), sample_report()};
  write_reports_csv(reports, dir / "r.csv");
  write_reports_json(reports, dir / "r.json");
  std::ifstream csv(dir / "r.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "domain,method,metric,value,seed,wall_seconds");
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 5) << line;
    EXPECT_EQ(line.rfind("target1,drr,", 0), 0u) << line;
    ++rows;
  }
  EXPECT_EQ(rows, 6u);
  const auto j = nlohmann::json::parse(std::ifstream(dir / "r.json"));
  ASSERT_TRUE(j.is_array());
  EXPECT_EQ(j.size(), 2u);
  EXPECT_EQ(EvalReport::from_json(j[1]).metrics, sample_report().metrics);
}

}  // namespace
}  // namespace mmt
