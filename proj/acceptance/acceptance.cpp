// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion.
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "mmt/checkpoint.hpp"
#include "mmt/commands.hpp"
#include "mmt/embeddings.hpp"
#include "mmt/error.hpp"
#include "mmt/evaluation.hpp"
#include "mmt/synth.hpp"

namespace mmt {
namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [failed]");
  }
};

std::string str(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string str(const char* f, double a, double b) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

class ScratchDir {
 public:
  ScratchDir() {
    path_ = std::filesystem::temp_directory_path() / ("mmt_acceptance_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

ModelConfig model_for(const DomainDataset& ds, std::size_t d = 16) {
  ModelConfig mc;
  mc.segments = ds.segments;
  mc.embedding_dim = d;
  mc.feedback = ds.feedback;
  return mc;
}

// Small two-domain world for the semantic checks.
SynthConfig small_world(std::uint64_t seed) {
  SynthConfig sc;
  sc.n_domains = 2;
  sc.users_per_domain = {80, 40};
  sc.items_per_domain = {40, 25};
  sc.interactions_per_domain = {2000, 500};
  sc.context_width = 6;
  sc.i_end = 2;
  sc.h_end = 4;
  sc.n_monomials = 4;
  sc.seed = seed;
  return sc;
}

Verdict gradient_suite() {
  Verdict v;
  const auto report = run_gradcheck();
  double worst = 0.0;
  std::string worst_case;
  for (const auto& c : report.cases) {
    if (c.max_rel_error >= worst) {
      worst = c.max_rel_error;
      worst_case = c.name;
    }
  }
  v.require(report.passed(), std::to_string(report.cases.size()) + " cases, worst rel err " +
                                 str("%.2e", worst) + " (" + worst_case + ")");
  v.require(report.seconds < 60.0, str("%.2f s < 60 s", report.seconds));
  return v;
}

Verdict pooling_algebra() {
  Verdict v;
  double worst = 0.0;
  const std::vector<double> c{0.3, 0.9, 1.0, 0.55, 0.05, 0.7};
  for (std::size_t k = 2; k <= 6; ++k) {
    ModelConfig mc;
    mc.segments = {2, 4, 6};
    mc.n_c = k;
    mc.pool_gate = PoolGate::Identity;
    ParameterStore<double> store;
    std::mt19937_64 rng(k);
    m1::init(store, mc, rng);
    for (std::size_t n = 2; n <= k; ++n) {
      store.at(m1::pool_weight(n)).value.fill(0.0);
      store.at(m1::pool_bias(n)).value.fill(1.0);
    }
    Graph<double> g;
    Tensor<double> x({1, 6});
    std::copy(c.begin(), c.end(), x.values().begin());
    const Tensor<double> pooled = g.value(m1::forward(g, store, mc, g.constant(x)).pooled);
    for (std::size_t i = 0; i < c.size(); ++i) worst = std::max(worst, std::abs(pooled[i] - std::pow(c[i], double(k))));
  }
  v.require(worst <= 1e-12, "identity gate c^k for k=2..6, max err " + str("%.1e", worst));

  auto ds = synth_generate(small_world(1)).datasets[0];
  auto mc = model_for(ds, 8);
  mc.dropout = 0.0;
  MmtModel<double> model(mc, 3);
  model.add_domain(ds, 4);
  for (const auto& [name, p] : model.store) {
    if (has_prefix(name, "m1.")) model.store.at(name).value.fill(0.4);
  }
  model.store.at(m4::kBias).value[0] = 0.37;
  CandidateBatch<double> batch(mc.context_width());
  const std::vector<float> zero(mc.context_width(), 0.0f);
  batch.push(0, 0, zero);
  batch.push(3, 5, zero);
  Graph<double> g;
  const auto fwd = model.forward(g, ds.domain_id, batch);
  double pooled_max = 0.0, sc_err = 0.0;
  for (double x : g.value(fwd.context.pooled).values()) pooled_max = std::max(pooled_max, std::abs(x));
  for (double x : g.value(*fwd.s_c).values()) sc_err = std::max(sc_err, std::abs(x - 0.37));
  v.require(pooled_max == 0.0 && sc_err == 0.0, "zero context: |pooled| " + str("%g", pooled_max) +
                                                     ", |s_c - b_C| " + str("%g", sc_err));
  return v;
}

struct World {
  SynthOutput data;
  MmtModel<float> source;
  MmtModel<float> target;
};

World small_transfer_world() {
  World w{synth_generate(small_world(2)), {}, {}};
  const auto& src = w.data.datasets[0];
  const auto& tgt = w.data.datasets[1];
  w.source = MmtModel<float>(model_for(src, 8), 5);
  w.source.add_domain(src, 6);
  TrainConfig tc;
  tc.max_epochs = 5;
  train(w.source, src, tc);
  w.target = pretrain_target<float>(w.source.config, tgt, 2, tc);
  return w;
}

Verdict transfer_semantics() {
  Verdict v;
  ScratchDir dir;
  auto w = small_transfer_world();
  const auto& tgt = w.data.datasets[1];
  save_checkpoint(w.source, dir / "source");
  const auto stored = load_checkpoint(dir / "source");
  const auto emb_before = parameter_hash(w.target.store, m2::prefix(tgt.domain_id));
  direct_transfer(stored, w.target);
  bool shared_equal = true;
  for (const char* p : {"m1.", "m3.", "m4."}) {
    shared_equal = shared_equal && parameter_hash(w.target.store, p) == parameter_hash(stored.store, p);
  }
  v.require(shared_equal, "shared hashes equal source checkpoint");
  v.require(parameter_hash(w.target.store, m2::prefix(tgt.domain_id)) == emb_before, "target embeddings unchanged");

  CandidateBatch<float> batch(tgt.context_width());
  for (std::size_t i : tgt.splits.test) batch.push(tgt.interactions[i]);
  const auto direct_scores = w.target.score(tgt.domain_id, batch);
  std::mt19937_64 rng(9);
  for (Site s : kSites) {
    init_regularizer(w.source.store, s, site_width(w.source.config, s), RegularizerConfig{}, rng);
  }
  import_regularizers(w.source.store, w.target.store);
  add_adapters(w.target, tgt.domain_id);
  v.require(w.target.score(tgt.domain_id, batch) == direct_scores,
            "zero-adapter scores bitwise equal direct (" + std::to_string(direct_scores.size()) + " rows)");

  const auto before = w.target.store;
  TrainConfig one;
  one.max_epochs = 1;
  one.batch_size = tgt.splits.train.size();
  drr_adapt(w.target, tgt, one, DrrConfig{});
  double delta = 0.0;
  bool adapters_moved = false;
  for (const auto& [name, p] : w.target.store) {
    const auto& old = before.at(name).value;
    if (is_shared_parameter(name)) {
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        delta = std::max(delta, std::abs(double(p.value.values()[i]) - double(old.values()[i])));
      }
    }
    if (has_prefix(name, adapter_prefix(tgt.domain_id)) && !(p.value == old)) adapters_moved = true;
  }
  v.require(delta == 0.0 && adapters_moved, "one DRR step: shared sup delta " + str("%g", delta) + ", adapters moved");
  return v;
}

Verdict annealing_schedule() {
  Verdict v;
  auto w = small_transfer_world();
  const auto& tgt = w.data.datasets[1];
  direct_transfer(w.source, w.target);
  TrainConfig tc;
  tc.batch_size = 32;
  AnnealConfig ac;
  ac.followup_epochs = 0;
  auto a = w.target;
  const auto r = anneal_adapt(a, tgt, tc, ac);
  bool exact = !r.shared_lrs.empty();
  for (std::size_t b = 0; b < r.shared_lrs.size(); ++b) {
    exact = exact && r.shared_lrs[b] == ac.eta0 * std::exp(-r.lambda * double(b + 1));
  }
  v.require(exact, std::to_string(r.shared_lrs.size()) + " recorded rates equal eta0*exp(-lambda*b)");

  auto frozen = w.target;
  ac.lambda = 50.0;
  anneal_adapt(frozen, tgt, tc, ac);
  double delta = 0.0;
  for (const auto& [name, p] : frozen.store) {
    if (!is_shared_parameter(name)) continue;
    const auto& old = w.target.store.at(name).value;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      delta = std::max(delta, std::abs(double(p.value.values()[i]) - double(old.values()[i])));
    }
  }
  v.require(delta < 1e-6, "lambda=50 shared sup delta " + str("%.2e", delta));
  return v;
}

Verdict regularizer_behavior() {
  Verdict v;
  SynthConfig sc;
  sc.seed = 1;
  auto data = synth_generate(sc);
  const auto& src = data.datasets[0];
  MmtModel<float> model(model_for(src), 1);
  model.add_domain(src, 2);
  TrainConfig tc;
  tc.max_epochs = 40;
  train(model, src, tc);
  bool separated = true, kept = true, collapsed = true;
  std::string sep, with, without;
  for (Site s : kSites) {
    const auto in = collect_site_inputs(model, src, s, src.splits.train);
    const auto held = collect_site_inputs(model, src, s, src.splits.validation);
    // Same seeding as the transfer command with seed 1.
    RegularizerConfig rc;
    rc.seed = 7 + static_cast<std::uint64_t>(s);
    auto a = model.store;
    train_regularizer(a, s, in, rc);
    const auto ea = evaluate_regularizer(a, s, held);
    rc.norm_term = false;
    auto b = model.store;
    train_regularizer(b, s, in, rc);
    const auto eb = evaluate_regularizer(b, s, held);
    separated = separated && ea.kl_clean < ea.kl_poisoned;
    kept = kept && ea.poison_norm > 0.01;
    collapsed = collapsed && eb.poison_norm < 0.01;
    const std::string name = to_string(s);
    sep += (sep.empty() ? "" : " ") + name + str(" %.3f<%.3f", ea.kl_clean, ea.kl_poisoned);
    with += (with.empty() ? "" : " ") + name + str(" %.3f", ea.poison_norm);
    without += (without.empty() ? "" : " ") + name + str(" %.3f", eb.poison_norm);
  }
  v.require(separated, "held-out KL clean<poisoned: " + sep);
  v.require(kept, "with norm term |P| > 0.01: " + with);
  v.require(collapsed, "without norm term |P| < 0.01: " + without);
  return v;
}

Verdict one_to_many() {
  Verdict v;
  const auto t0 = Clock::now();
  // Per target and adaptation: seeds improving on scratch, and the time ratio.
  std::map<std::string, int> wins;
  std::map<std::string, std::vector<std::string>> slow;
  std::size_t unreached = 0, runs = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SynthConfig sc;
    sc.seed = seed;
    auto data = synth_generate(sc);
    std::vector<DomainDataset> targets(data.datasets.begin() + 1, data.datasets.end());
    CompareConfig cc;
    cc.seeds = {seed};
    cc.train.max_epochs = 60;
    const auto r = compare_transfer(model_for(data.datasets[0]), data.datasets[0], targets, cc);
    for (const auto& rep : r.reports) {
      if (rep.method != "anneal" && rep.method != "drr") continue;
      const std::string key = rep.domain_id + "/" + rep.method;
      if (rep.metrics.at("delta_pct") > 0.0) ++wins[key];
      ++runs;
      // Scratch that never reaches the adapted quality needs unbounded time.
      const bool reached = rep.metrics.at("scratch_reached") > 0.0;
      if (!reached) ++unreached;
      if (reached && !(rep.metrics.at("speedup") > 1.0)) {
        slow[key].push_back("seed " + std::to_string(seed) + str(" ratio %.2f", rep.metrics.at("speedup")));
      }
    }
  }
  bool all = true;
  std::string counts;
  for (const auto& [key, n] : wins) {
    all = all && n >= 4;
    counts += (counts.empty() ? "" : " ") + key + " " + std::to_string(n) + "/5";
  }
  all = all && wins.size() == 6;
  v.require(all, "(a) wins vs scratch: " + counts);
  std::string slow_list;
  std::size_t n_slow = 0;
  for (const auto& [key, items] : slow) {
    for (const auto& s : items) slow_list += " " + key + " " + s + ";";
    n_slow += items.size();
  }
  v.require(slow.empty(), "(b) adaptation faster than scratch-to-equal-quality in " +
                              std::to_string(runs - n_slow) + "/" + std::to_string(runs) + " runs (" +
                              std::to_string(unreached) + " where scratch never reached it)" + slow_list);
  const double total = seconds_since(t0);
  v.require(total < 600.0, str("%.0f s < 600 s", total));
  return v;
}

// Final validation loss of two single-domain models trained side by side.
std::pair<int, std::string> paired_runs(const std::function<void(SynthConfig&)>& data,
                                        const std::function<void(ModelConfig&)>& ablate, bool final_validation) {
  int wins = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SynthConfig sc;
    sc.seed = seed;
    sc.n_domains = 1;
    sc.users_per_domain = {1000};
    sc.items_per_domain = {300};
    sc.interactions_per_domain = {20000};
    data(sc);
    const auto ds = synth_generate(sc).datasets[0];
    const auto base = model_for(ds);
    auto other = base;
    ablate(other);
    TrainConfig tc;
    tc.seed = seed;
    tc.max_epochs = 60;
    MmtModel<float> a(base, seed), b(other, seed);
    a.add_domain(ds, seed + 1);
    b.add_domain(ds, seed + 1);
    const auto ra = train(a, ds, tc);
    const auto rb = train(b, ds, tc);
    double la, lb;
    if (final_validation) {
      la = ra.epochs.back().validation;
      lb = rb.epochs.back().validation;
    } else {
      la = headline_loss(evaluate(a, ds, seed));
      lb = headline_loss(evaluate(b, ds, seed));
    }
    if (la < lb) ++wins;
    detail += (detail.empty() ? "" : " ") + str("%.3f/%.3f", la, lb);
  }
  return {wins, detail};
}

Verdict pooling_vs_additive() {
  Verdict v;
  const auto [wins, detail] = paired_runs([](SynthConfig& sc) { sc.exact_order = true; },
                                          [](ModelConfig& mc) { mc.fmt = true; }, true);
  v.require(wins >= 4, "MMT final validation below FMT in " + std::to_string(wins) + "/5 seeds (MMT/FMT " + detail + ")");
  return v;
}

Verdict context_bias_ablation() {
  Verdict v;
  const auto [wins, detail] = paired_runs([](SynthConfig& sc) { sc.novelty_skew = 0.8; },
                                          [](ModelConfig& mc) { mc.loss.context_bias_enabled = false; }, false);
  v.require(wins >= 4, "disabling context bias worsens test rmse in " + std::to_string(wins) +
                           "/5 seeds (on/off " + detail + ")");
  return v;
}

Verdict evaluation_oracles() {
  Verdict v;
  // Random continuous contexts, 40 users and 120 items.
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u;
  DomainDataset ds;
  ds.domain_id = "eval";
  ds.n_users = 40;
  ds.n_items = 120;
  ds.feedback = Feedback::Implicit;
  ds.segments = {2, 4, 6};
  for (std::size_t i = 0; i < 3000; ++i) {
    Interaction t{static_cast<int>(i % 40), static_cast<int>(rng() % 120), {}, {}};
    for (int f = 0; f < 6; ++f) t.context.push_back(u(rng));
    ds.interactions.push_back(std::move(t));
  }
  ds.splits.train.resize(ds.interactions.size());
  std::iota(ds.splits.train.begin(), ds.splits.train.end(), std::size_t{0});
  ds = split(std::move(ds), 1);

  // Coarse scores force ties; the oracle sorts every group with the positive last among equals.
  std::vector<std::vector<double>> groups;
  std::mt19937_64 srng(11);
  const ScoreFn coarse = [&](const CandidateBatch<float>& b) {
    std::vector<double> out(b.size());
    for (auto& s : out) s = double(srng() % 4);
    for (std::size_t g = 0; g < b.size(); g += 10) groups.emplace_back(out.begin() + g, out.begin() + g + 10);
    return out;
  };
  std::vector<std::size_t> ks{1, 2, 3, 5, 10};
  const auto hr = hit_rate(ds, ds.splits.test, coarse, ks, 9, 4);
  bool oracle_ok = groups.size() == ds.splits.test.size();
  for (std::size_t k : ks) {
    std::size_t hits = 0;
    for (const auto& s : groups) {
      std::vector<std::size_t> order(s.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (s[a] != s[b]) return s[a] > s[b];
        return (a == 0) < (b == 0);
      });
      const auto pos = std::size_t(std::find(order.begin(), order.end(), 0u) - order.begin());
      if (pos < k) ++hits;
    }
    oracle_ok = oracle_ok && hr.at(k) == double(hits) / double(groups.size());
  }
  v.require(oracle_ok, "hit_rate equals brute-force ranking over " + std::to_string(groups.size()) +
                           " 10-candidate groups, K in {1,2,3,5,10}");

  const auto a = rmse_mae(std::vector<double>{3.0, 4.0}, std::vector<double>{3.0, 4.0});
  const auto b = rmse_mae(std::vector<double>{2.0, 5.0}, std::vector<double>{3.0, 4.0});
  const auto c = rmse_mae(std::vector<double>{3.0, 2.0}, std::vector<double>{3.0, 4.0});
  const bool hand = a.rmse == 0.0 && a.mae == 0.0 && std::abs(b.rmse - 1.0) < 1e-9 && std::abs(b.mae - 1.0) < 1e-9 &&
                    std::abs(c.rmse - std::sqrt(2.0)) < 1e-9 && std::abs(c.mae - 1.0) < 1e-9;
  v.require(hand, "rmse/mae hand cases (0,0) (1,1) (sqrt2,1)");

  std::vector<std::size_t> all(ds.interactions.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::mt19937_64 rr(5);
  const ScoreFn random = [&](const CandidateBatch<float>& batch) {
    std::uniform_real_distribution<double> d;
    std::vector<double> out(batch.size());
    for (auto& s : out) s = d(rr);
    return out;
  };
  const double h1 = hit_rate(ds, all, random, {1}).at(1);
  const double p = 1.0 / 101.0, sigma = std::sqrt(p * (1.0 - p) / double(all.size()));
  v.require(std::abs(h1 - p) <= 3.0 * sigma, str("random hr@1 %.5f vs 1/101 (3 sigma %.5f)", h1, 3.0 * sigma));
  return v;
}

Verdict robustness_monotonicity() {
  Verdict v;
  SynthConfig sc;
  sc.seed = 1;
  sc.n_domains = 1;
  sc.users_per_domain = {1000};
  sc.items_per_domain = {300};
  sc.interactions_per_domain = {20000};
  const auto ds = synth_generate(sc).datasets[0];
  RobustnessConfig rc;
  rc.train.max_epochs = 30;
  const auto rows = robustness_sweep(model_for(ds), ds, rc);
  double at5 = 0.0, at20 = 0.0;
  std::string table;
  for (const auto& r : rows) {
    if (std::abs(r.fraction - 0.05) < 1e-12) at5 = r.mean_degradation;
    if (std::abs(r.fraction - 0.20) < 1e-12) at20 = r.mean_degradation;
    table += (table.empty() ? "" : " ") + str("%.2f:%.1f%%", r.fraction, r.mean_degradation);
  }
  v.require(at20 >= at5, "3-seed mean degradation " + table);
  return v;
}

Verdict persistence() {
  Verdict v;
  ScratchDir dir;
  {
    std::ofstream(dir / "synth.json") << R"({"n_domains": 2, "users_per_domain": [200, 50],
      "items_per_domain": [80, 30], "interactions_per_domain": [3000, 600], "context_width": 9,
      "i_end": 3, "h_end": 6, "seed": 4})";
  }
  cmd_synth(dir / "synth.json", dir / "data");
  auto run = [&](const std::string& out) {
    ExperimentConfig c;
    c.model.embedding_dim = 16;
    c.train.max_epochs = 5;
    c.seed = 3;
    c.data.path = (dir / "data" / "source").string();
    c.out = (dir / out).string();
    cmd_train(c);
    return checkpoint_hash(dir / out / "checkpoint");
  };
  const auto h1 = run("a");
  const auto h2 = run("b");
  v.require(h1 == h2, "seeded end-to-end runs hash " + h1.substr(0, 12) + " twice");

  const auto loaded = load_checkpoint(dir / "a" / "checkpoint");
  save_checkpoint(loaded, dir / "again");
  const auto reloaded = load_checkpoint(dir / "again");
  bool bitwise = parameter_hash(reloaded.store) == h1 && reloaded.config == loaded.config &&
                 reloaded.store.size() == loaded.store.size();
  for (const auto& [name, p] : loaded.store) {
    bitwise = bitwise && reloaded.store.contains(name) && reloaded.store.at(name).value == p.value;
  }
  v.require(bitwise, "save/load/save round trip bitwise identical");
  return v;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Verdict()> run;
};

}  // namespace
}  // namespace mmt

int main(int argc, char** argv) {
  using namespace mmt;
  CLI::App app{"MMT-Net acceptance suite"};
  std::vector<int> only;
  bool strict = false;
  std::string report_path;
  app.add_option("--only", only, "Criteria to run (default: all)");
  app.add_option("--report", report_path, "Also write the verdict lines to this file");
  app.add_flag("--strict", strict, "Exit non-zero when any criterion fails");
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::warn);

  const std::vector<Criterion> criteria{
      {1, "gradient suite", gradient_suite},
      {2, "pooling algebra", pooling_algebra},
      {3, "transfer semantics", transfer_semantics},
      {4, "annealing schedule", annealing_schedule},
      {5, "regularizer behavior", regularizer_behavior},
      {6, "one-to-many transfer", one_to_many},
      {7, "pooling vs additive", pooling_vs_additive},
      {8, "context-bias ablation", context_bias_ablation},
      {9, "evaluation oracles", evaluation_oracles},
      {10, "robustness monotonicity", robustness_monotonicity},
      {11, "persistence", persistence},
  };
  std::ofstream report;
  if (!report_path.empty()) report.open(report_path);
  auto emit = [&](const std::string& line) {
    std::fputs(line.c_str(), stdout);
    std::fflush(stdout);
    if (report) report << line << std::flush;
  };
  int failed = 0, errors = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("error: ") + e.what();
      ++errors;
    }
    if (!v.pass) ++failed;
    char head[64];
    std::snprintf(head, sizeof head, "%s  %2d %-24s %6.1fs  ", v.pass ? "PASS" : "FAIL", c.id, c.name,
                  seconds_since(t0));
    emit(head + v.detail + "\n");
  }
  emit(std::to_string(failed) + " criteria failed\n");
  if (errors > 0) return 2;
  return strict && failed > 0 ? 1 : 0;
}
