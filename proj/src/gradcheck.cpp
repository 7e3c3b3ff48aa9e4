// SPDX-License-Identifier: Apache-2.0
#include "mmt/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "mmt/synth.hpp"
#include "mmt/transfer.hpp"

namespace mmt {

bool GradCheckReport::passed() const {
  return std::all_of(cases.begin(), cases.end(), [](const GradCheckCase& c) { return c.passed; });
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-3});
}

GradCheckCase check_gradients(const std::string& name, ParameterStore<double>& store, const LossBuilder& loss,
                              const std::function<bool(const std::string&)>& select, double h, double tolerance) {
  store.zero_grad();
  {
    Graph<double> g;
    g.backward(loss(g));
  }
  GradCheckCase out;
  out.name = name;
  auto eval = [&] {
    Graph<double> g;
    return g.scalar(loss(g));
  };
  for (auto& [pname, p] : store) {
    if (!p.trainable || !select(pname)) continue;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double x0 = p.value[i];
      p.value[i] = x0 + h;
      const double up = eval();
      p.value[i] = x0 - h;
      const double down = eval();
      p.value[i] = x0;
      const double err = relative_error(p.grad[i], (up - down) / (2.0 * h));
      if (out.coordinates++ == 0 || err > out.max_rel_error) {
        out.max_rel_error = err;
        out.worst = pname + "[" + std::to_string(i) + "]";
      }
    }
  }
  store.zero_grad();
  out.passed = out.coordinates > 0 && out.max_rel_error < tolerance;
  return out;
}

namespace {

DomainDataset toy_domain(const GradCheckConfig& cfg, Feedback feedback) {
  SynthConfig sc;
  sc.n_domains = 1;
  sc.users_per_domain = {3};
  sc.items_per_domain = {3};
  sc.interactions_per_domain = {40};
  sc.context_width = cfg.context_width;
  sc.i_end = cfg.context_width / 3;
  sc.h_end = 2 * cfg.context_width / 3;
  sc.n_monomials = 4;
  sc.feedback = feedback;
  sc.seed = cfg.seed;
  return synth_generate(sc).datasets.front();
}

ModelConfig toy_config(const GradCheckConfig& cfg, const DomainDataset& ds) {
  ModelConfig mc;
  mc.segments = ds.segments;
  mc.embedding_dim = cfg.embedding_dim;
  mc.n_c = 3;
  mc.n_u = 3;
  mc.n_v = 3;
  mc.multimodal = true;
  mc.feedback = ds.feedback;
  mc.dropout = 0.2;
  mc.loss.attenuation_enabled = true;
  mc.loss.curriculum_l2 = 0.1;
  return mc;
}

// Parameters that start at zero are moved off it so every path carries signal.
void jitter(ParameterStore<double>& store, std::uint64_t seed, double scale = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (auto& [name, p] : store) {
    for (auto& v : p.value.values()) v += n(rng);
  }
}

std::vector<std::size_t> first_train(const DomainDataset& ds, std::size_t n) {
  n = std::min(n, ds.splits.train.size());
  return {ds.splits.train.begin(), ds.splits.train.begin() + static_cast<std::ptrdiff_t>(n)};
}

LossBuilder model_loss(MmtModel<double>& model, const DomainDataset& ds, std::vector<std::size_t> idx,
                       std::uint64_t seed, double reg_weight = -1.0) {
  return [&model, &ds, idx = std::move(idx), seed, reg_weight](Graph<double>& g) {
    std::mt19937_64 neg(seed);
    std::mt19937_64 drop(seed + 1);
    ForwardOptions opt;
    opt.training = true;
    opt.rng = &drop;
    auto bl = batch_loss(g, model, ds, idx, neg, opt);
    if (reg_weight < 0.0) return bl.terms.objective;
    return g.add(bl.terms.objective, drr_penalty(g, model.store, bl, reg_weight));
  };
}

auto everything = [](const std::string&) { return true; };

}  // namespace

GradCheckReport run_gradcheck(const GradCheckConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  GradCheckReport report;
  const auto add = [&](GradCheckCase c) { report.cases.push_back(std::move(c)); };

  const auto explicit_ds = toy_domain(cfg, Feedback::Explicit);
  const auto implicit_ds = toy_domain(cfg, Feedback::Implicit);

  {
    MmtModel<double> model(toy_config(cfg, explicit_ds), cfg.seed);
    model.add_domain(explicit_ds, cfg.seed + 1);
    jitter(model.store, cfg.seed + 2);
    add(check_gradients("explicit", model.store, model_loss(model, explicit_ds, first_train(explicit_ds, cfg.batch), 3),
                        everything, cfg.h, cfg.tolerance));
  }
  {
    MmtModel<double> model(toy_config(cfg, implicit_ds), cfg.seed);
    model.add_domain(implicit_ds, cfg.seed + 1);
    jitter(model.store, cfg.seed + 2);
    add(check_gradients("implicit", model.store, model_loss(model, implicit_ds, first_train(implicit_ds, cfg.batch), 3),
                        everything, cfg.h, cfg.tolerance));
  }
  {
    auto mc = toy_config(cfg, explicit_ds);
    mc.fmt = true;
    mc.multimodal = false;
    MmtModel<double> model(mc, cfg.seed);
    model.add_domain(explicit_ds, cfg.seed + 1);
    jitter(model.store, cfg.seed + 2, 0.1);
    add(check_gradients("fmt", model.store, model_loss(model, explicit_ds, first_train(explicit_ds, cfg.batch), 3),
                        everything, cfg.h, cfg.tolerance));
  }

  MmtModel<double> drr(toy_config(cfg, explicit_ds), cfg.seed);
  drr.add_domain(explicit_ds, cfg.seed + 1);
  std::mt19937_64 rng(cfg.seed + 4);
  RegularizerConfig rc;
  for (Site s : kSites) init_regularizer(drr.store, s, site_width(drr.config, s), rc, rng);
  add_adapters(drr, explicit_ds.domain_id);
  jitter(drr.store, cfg.seed + 5, 0.2);
  add(check_gradients("drr", drr.store, model_loss(drr, explicit_ds, first_train(explicit_ds, cfg.batch), 3, 0.5),
                      everything, cfg.h, cfg.tolerance));

  // Regularizer objectives on the adapted site values of the DRR model.
  for (Site s : kSites) {
    const auto inputs = collect_site_inputs(drr, explicit_ds, s, first_train(explicit_ds, cfg.batch));
    const std::string enc = regularizer_prefix(s) + "enc.";
    add(check_gradients(
        "encoder." + to_string(s), drr.store,
        [&](Graph<double>& g) { return encoder_objective(g, drr.store, s, g.constant(inputs)).loss; },
        [&](const std::string& n) { return has_prefix(n, enc); }, cfg.h, cfg.tolerance));
    add(check_gradients(
        "poisoner." + to_string(s), drr.store,
        [&](Graph<double>& g) { return poisoner_objective(g, drr.store, s, g.constant(inputs), true, 1e-8); },
        [&](const std::string& n) { return has_prefix(n, regularizer_prefix(s)); }, cfg.h, cfg.tolerance));
  }

  {
    ParameterStore<double> store;
    std::mt19937_64 r(cfg.seed + 6);
    std::normal_distribution<double> n(0.0, 1.0);
    Tensor<double> mu({cfg.batch, cfg.embedding_dim}), lv({cfg.batch, cfg.embedding_dim}),
        xi({cfg.batch, cfg.embedding_dim});
    for (auto* t : {&mu, &lv, &xi}) {
      for (auto& v : t->values()) v = n(r);
    }
    store.add("mu", mu);
    store.add("logvar", lv);
    add(check_gradients(
        "kl_sampled", store,
        [&](Graph<double>& g) {
          return g.mean(kl_sampled(g, g.param(store.at("mu")), g.param(store.at("logvar")), xi));
        },
        everything, cfg.h, cfg.tolerance));
  }

  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace mmt
