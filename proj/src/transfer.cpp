// SPDX-License-Identifier: Apache-2.0
#include "mmt/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "mmt/embeddings.hpp"
#include "mmt/error.hpp"

namespace mmt {

std::string to_string(TransferMethod m) {
  switch (m) {
    case TransferMethod::Direct: return "direct";
    case TransferMethod::Anneal: return "anneal";
    case TransferMethod::Drr: return "drr";
  }
  return "?";
}

TransferMethod transfer_method_from_string(const std::string& s) {
  if (s == "direct") return TransferMethod::Direct;
  if (s == "anneal") return TransferMethod::Anneal;
  if (s == "drr") return TransferMethod::Drr;
  throw ConfigError("unknown transfer method '" + s + "' (direct, anneal, drr)");
}

bool is_shared_parameter(const std::string& name) {
  return has_prefix(name, "m1.") || has_prefix(name, "m3.") || has_prefix(name, "m4.");
}

template <typename T>
void direct_transfer(const MmtModel<T>& source, MmtModel<T>& target) {
  const auto& a = source.config;
  const auto& b = target.config;
  std::vector<std::string> problems;
  auto check = [&](bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
  };
  check(a.segments == b.segments, "context layout");
  check(a.embedding_dim == b.embedding_dim, "embedding_dim");
  check(a.n_c == b.n_c, "n_c");
  check(a.n_u == b.n_u, "n_u");
  check(a.n_v == b.n_v, "n_v");
  check(a.multimodal == b.multimodal, "multimodal");
  check(a.fmt == b.fmt, "fmt");

  std::set<std::string> names;
  for (const auto& [name, p] : source.store) {
    if (is_shared_parameter(name)) names.insert(name);
  }
  for (const auto& [name, p] : target.store) {
    if (is_shared_parameter(name)) names.insert(name);
  }
  for (const auto& name : names) {
    if (!source.store.contains(name)) {
      problems.push_back(name + " (missing in source)");
    } else if (!target.store.contains(name)) {
      problems.push_back(name + " (missing in target)");
    } else if (source.store.at(name).value.shape() != target.store.at(name).value.shape()) {
      problems.push_back(name + " (" + shape_string(source.store.at(name).value.shape()) + " vs " +
                         shape_string(target.store.at(name).value.shape()) + ")");
    }
  }
  if (!problems.empty()) {
    std::string msg = "incompatible transfer:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw TransferError(msg);
  }
  for (const auto& name : names) {
    auto& dst = target.store.at(name);
    dst.value = source.store.at(name).value;
    dst.zero_grad();
    dst.reset_optimizer_state();
  }
}

double anneal_lr(std::size_t b, double eta0, double lambda) {
  return eta0 * std::exp(-lambda * static_cast<double>(b));
}

template <typename T>
AnnealResult anneal_adapt(MmtModel<T>& target, const DomainDataset& ds, const TrainConfig& cfg,
                          const AnnealConfig& acfg) {
  cfg.validate();
  if (!(acfg.eta0 > 0.0)) throw ConfigError("anneal: eta0 must be positive");
  const std::size_t batches = (ds.splits.train.size() + cfg.batch_size - 1) / cfg.batch_size;
  AnnealResult out;
  out.lambda = acfg.lambda > 0.0 ? acfg.lambda : std::log(1000.0) / static_cast<double>(std::max<std::size_t>(batches, 1));
  const std::string own = m2::prefix(ds.domain_id);

  EpochHooks<T> hooks;
  hooks.lr = [&](std::size_t b, const std::string& name) -> std::optional<double> {
    if (is_shared_parameter(name)) {
      const double lr = anneal_lr(b + 1, acfg.eta0, out.lambda);
      if (out.shared_lrs.size() == b) out.shared_lrs.push_back(lr);
      return lr;
    }
    if (has_prefix(name, own)) return acfg.eta0;
    return std::nullopt;
  };
  std::mt19937_64 rng(cfg.seed);
  AdamConfig adam;
  adam.lr = acfg.eta0;
  out.anneal_loss = run_epoch(target, ds, adam, cfg, rng, hooks);

  TrainConfig follow = cfg;
  follow.max_epochs = acfg.followup_epochs;
  follow.seed = cfg.seed + 1;
  EpochHooks<T> m2_only;
  m2_only.lr = [&](std::size_t, const std::string& name) -> std::optional<double> {
    if (has_prefix(name, own)) return cfg.lr;
    return std::nullopt;
  };
  if (follow.max_epochs > 0) out.followup = train(target, ds, follow, m2_only);
  return out;
}

// Regularizers.

std::string regularizer_prefix(Site s) { return "reg." + to_string(s) + "."; }

std::size_t site_width(const ModelConfig& cfg, Site s) {
  return s == Site::C2 ? cfg.context_width() : cfg.embedding_dim;
}

namespace {

struct RegDims {
  std::size_t width, latent, hidden;
};

RegDims dims_for(std::size_t width, const RegularizerConfig& cfg) {
  const std::size_t z = cfg.latent ? cfg.latent : std::max<std::size_t>(8, width / 4);
  return {width, z, cfg.hidden ? cfg.hidden : 2 * z};
}

template <typename T>
Tensor<T> uniform(std::vector<std::size_t> shape, double limit, std::mt19937_64& rng) {
  Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> u(-limit, limit);
  for (auto& x : t.values()) x = static_cast<T>(u(rng));
  return t;
}

template <typename T>
Var dense(Graph<T>& g, ParameterStore<T>& store, const std::string& base, Var x) {
  return g.add_row(g.matmul_t(x, g.param(store.at(base + ".W"))), g.param(store.at(base + ".b")));
}

}  // namespace

template <typename T>
void init_regularizer(ParameterStore<T>& store, Site s, std::size_t width, const RegularizerConfig& cfg,
                      std::mt19937_64& rng) {
  const auto d = dims_for(width, cfg);
  const auto p = regularizer_prefix(s);
  auto layer = [&](const std::string& name, std::size_t out, std::size_t in) {
    store.add(p + name + ".W", uniform<T>({out, in}, 1.0 / std::sqrt(static_cast<double>(in)), rng));
    store.add(p + name + ".b", Tensor<T>({out}));
  };
  layer("enc.h", d.hidden, d.width);
  layer("enc.mu", d.latent, d.hidden);
  layer("enc.lv", d.latent, d.hidden);
  layer("poison.h", d.hidden, d.width);
  store.add(p + "poison.out.W", Tensor<T>({d.width, d.hidden}));
  store.add(p + "poison.out.b", Tensor<T>({d.width}));
}

template <typename T>
bool has_regularizer(const ParameterStore<T>& store, Site s) {
  const auto p = regularizer_prefix(s);
  for (const char* n : {"enc.h.W", "enc.mu.W", "enc.lv.W", "poison.h.W", "poison.out.W"}) {
    if (!store.contains(p + n)) return false;
  }
  return true;
}

template <typename T>
Encoding<T> encode(Graph<T>& g, ParameterStore<T>& store, Site s, Var x) {
  const auto p = regularizer_prefix(s);
  Var h = g.relu(dense(g, store, p + "enc.h", x));
  Encoding<T> e;
  e.mu = dense(g, store, p + "enc.mu", h);
  const T bound = static_cast<T>(kLogvarBound);
  e.logvar = g.scale(g.tanh(g.scale(dense(g, store, p + "enc.lv", h), T(1) / bound)), bound);
  return e;
}

template <typename T>
Var poison(Graph<T>& g, ParameterStore<T>& store, Site s, Var x) {
  const auto p = regularizer_prefix(s);
  return dense(g, store, p + "poison.out", g.relu(dense(g, store, p + "poison.h", x)));
}

template <typename T>
Var kl_standard_normal(Graph<T>& g, Var mu, Var logvar) {
  Var terms = g.sub(g.add(g.exp(logvar), g.square(mu)), g.add_scalar(logvar, T(1)));
  return g.scale(g.row_sum(terms), T(0.5));
}

double kl_standard_normal(std::span<const double> mu, std::span<const double> logvar) {
  if (mu.size() != logvar.size()) throw DimensionError("kl: mu and logvar lengths differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    acc += std::exp(logvar[i]) + mu[i] * mu[i] - 1.0 - logvar[i];
  }
  return 0.5 * acc;
}

template <typename T>
Var kl_sampled(Graph<T>& g, Var mu, Var logvar, const Tensor<T>& xi) {
  if (!(xi.shape() == g.value(mu).shape())) throw DimensionError("kl_sampled: xi shape differs from mu");
  Var noise = g.constant(xi);
  Var z = g.add(mu, g.mul(g.exp(g.scale(logvar, T(0.5))), noise));
  // log q(z) - log p(z) = -lv/2 - xi^2/2 + z^2/2 (normalisers cancel).
  Tensor<T> xi_sq = xi;
  for (auto& v : xi_sq.values()) v = v * v * T(-0.5);
  Var terms = g.add(g.add(g.scale(logvar, T(-0.5)), g.constant(xi_sq)), g.scale(g.square(z), T(0.5)));
  return g.row_sum(terms);
}

template <typename T>
Tensor<T> collect_site_inputs(MmtModel<T>& model, const DomainDataset& ds, Site s,
                              std::span<const std::size_t> indices) {
  const std::size_t w = site_width(model.config, s);
  Tensor<T> out({indices.size(), w});
  constexpr std::size_t kChunk = 1024;
  for (std::size_t begin = 0; begin < indices.size(); begin += kChunk) {
    const std::size_t end = std::min(indices.size(), begin + kChunk);
    CandidateBatch<T> batch(model.config.context_width());
    for (std::size_t k = begin; k < end; ++k) batch.push(ds.interactions.at(indices[k]));
    Graph<T> g;
    auto fwd = model.forward(g, ds.domain_id, batch);
    Var site = s == Site::C2 ? fwd.context.c2 : s == Site::GatedUser ? fwd.rep.gated_user : fwd.rep.gated_item;
    const auto& v = g.value(site);
    std::copy(v.values().begin(), v.values().end(), out.values().begin() + begin * w);
  }
  return out;
}

namespace {

template <typename T>
Tensor<T> rows_of(const Tensor<T>& x, std::span<const std::size_t> rows) {
  const std::size_t w = x.cols();
  Tensor<T> out({rows.size(), w});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy(x.row(rows[r]).begin(), x.row(rows[r]).end(), out.row(r).begin());
  }
  return out;
}

}  // namespace

template <typename T>
RegularizerEval evaluate_regularizer(ParameterStore<T>& store, Site s, const Tensor<T>& inputs) {
  if (inputs.rows() == 0) throw EvalError("regularizer evaluation over no inputs");
  Graph<T> g;
  Var x = g.constant(inputs);
  Var p = poison(g, store, s, x);
  auto clean = encode(g, store, s, x);
  auto dirty = encode(g, store, s, g.add(x, p));
  RegularizerEval e;
  e.kl_clean = static_cast<double>(g.scalar(g.mean(kl_standard_normal(g, clean.mu, clean.logvar))));
  e.kl_poisoned = static_cast<double>(g.scalar(g.mean(kl_standard_normal(g, dirty.mu, dirty.logvar))));
  e.poison_norm = static_cast<double>(g.scalar(g.mean(g.row_norm(p))));
  return e;
}

template <typename T>
EncoderObjective encoder_objective(Graph<T>& g, ParameterStore<T>& store, Site s, Var x) {
  Var dirty_in = g.add(x, g.constant(g.value(poison(g, store, s, x))));
  auto clean = encode(g, store, s, x);
  auto dirty = encode(g, store, s, dirty_in);
  EncoderObjective out;
  out.kl_clean = g.mean(kl_standard_normal(g, clean.mu, clean.logvar));
  out.kl_poisoned = g.mean(kl_standard_normal(g, dirty.mu, dirty.logvar));
  out.loss = g.sub(out.kl_clean, out.kl_poisoned);
  return out;
}

template <typename T>
Var poisoner_objective(Graph<T>& g, ParameterStore<T>& store, Site s, Var x, bool norm_term, double eps) {
  Var p = poison(g, store, s, x);
  auto dirty = encode(g, store, s, g.add(x, p));
  Var loss = g.mean(kl_standard_normal(g, dirty.mu, dirty.logvar));
  if (norm_term) loss = g.sub(loss, g.mean(g.log(g.row_norm(p), static_cast<T>(eps))));
  return loss;
}

template <typename T>
RegularizerHistory train_regularizer(ParameterStore<T>& store, Site s, const Tensor<T>& inputs,
                                     const RegularizerConfig& cfg) {
  if (inputs.rows() == 0) throw ConfigError("regularizer training needs site inputs");
  if (cfg.epochs == 0 || cfg.batch_size == 0 || !(cfg.lr > 0.0)) {
    throw ConfigError("regularizer: epochs, batch size and lr must be positive");
  }
  if (cfg.final_lr_fraction < 0.0 || cfg.final_lr_fraction > 1.0) {
    throw ConfigError("regularizer: final_lr_fraction must lie in [0, 1]");
  }
  std::mt19937_64 rng(cfg.seed);
  if (!has_regularizer(store, s)) init_regularizer(store, s, inputs.cols(), cfg, rng);
  const auto enc_prefix = regularizer_prefix(s) + "enc.";
  const auto poison_prefix = regularizer_prefix(s) + "poison.";
  const std::size_t batches = (inputs.rows() + cfg.batch_size - 1) / cfg.batch_size;
  const double total_batches = static_cast<double>(batches * cfg.epochs);
  double lr = cfg.lr;
  auto only = [&](const std::string& prefix) -> LearningRatePolicy {
    return [prefix, &lr](const std::string& name) -> std::optional<double> {
      if (has_prefix(name, prefix)) return lr;
      return std::nullopt;
    };
  };
  const auto enc_policy = only(enc_prefix);
  const auto poison_policy = only(poison_prefix);
  std::size_t step = 0;

  AdamConfig adam;
  adam.lr = cfg.lr;
  std::vector<std::size_t> order(inputs.rows());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  RegularizerHistory history;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0, b = 0; begin < order.size(); begin += cfg.batch_size, ++b) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const Tensor<T> xb = rows_of(inputs, std::span<const std::size_t>(order.data() + begin, end - begin));
      lr = cfg.lr * (1.0 - (1.0 - cfg.final_lr_fraction) * static_cast<double>(step++) / total_batches);
      for (std::size_t k = 0; k < cfg.encoder_steps; ++k) {
        Graph<T> g;
        const auto obj = encoder_objective(g, store, s, g.constant(xb));
        const double clean_value = static_cast<double>(g.scalar(obj.kl_clean));
        if (clean_value > cfg.divergence_limit) {
          std::ostringstream msg;
          msg << "regularizer for site " << to_string(s) << " diverged at epoch " << epoch + 1
              << " batch " << b << ": KL(clean) = " << clean_value
              << ", KL(poisoned) = " << static_cast<double>(g.scalar(obj.kl_poisoned))
              << ", limit = " << cfg.divergence_limit;
          throw DivergenceError(msg.str());
        }
        g.backward(obj.loss);
        adam_step(store, adam, enc_policy);
      }
      for (std::size_t k = 0; k < cfg.poisoner_steps; ++k) {
        Graph<T> g;
        g.backward(poisoner_objective(g, store, s, g.constant(xb), cfg.norm_term, cfg.poison_eps));
        adam_step(store, adam, poison_policy);
      }
    }
    history.epochs.push_back(evaluate_regularizer(store, s, inputs));
  }
  return history;
}

template <typename T>
void import_regularizers(const ParameterStore<T>& source, ParameterStore<T>& target) {
  for (const auto& [name, p] : source) {
    if (!has_prefix(name, "reg.")) continue;
    if (target.contains(name)) {
      target.at(name).value = p.value;
    } else {
      target.add(name, p.value);
    }
    target.at(name).trainable = false;
  }
}

template <typename T>
void add_adapters(MmtModel<T>& model, const std::string& domain) {
  for (Site s : kSites) {
    if (model.store.contains(adapter_weight(domain, s))) continue;
    const std::size_t w = site_width(model.config, s);
    model.store.add(adapter_weight(domain, s), Tensor<T>({w, w}));
    model.store.add(adapter_bias(domain, s), Tensor<T>({w}));
  }
}

template <typename T>
Var drr_penalty(Graph<T>& g, ParameterStore<T>& store, const BatchLoss<T>& bl, double reg_weight) {
  const std::size_t n = bl.n_positive;
  Var total{};
  bool first = true;
  for (Site s : kSites) {
    Var v = s == Site::C2        ? bl.forward.context.c2
            : s == Site::GatedUser ? bl.forward.rep.gated_user
                                   : bl.forward.rep.gated_item;
    auto e = encode(g, store, s, g.slice_rows(v, 0, n));
    Var kl = g.mean(kl_standard_normal(g, e.mu, e.logvar));
    total = first ? kl : g.add(total, kl);
    first = false;
  }
  return g.scale(total, static_cast<T>(reg_weight));
}

template <typename T>
TrainResult drr_adapt(MmtModel<T>& target, const DomainDataset& ds, const TrainConfig& cfg,
                      const DrrConfig& dcfg) {
  for (Site s : kSites) {
    if (!has_regularizer(target.store, s)) {
      throw ConfigError("drr: no regularizer for site " + to_string(s));
    }
  }
  if (dcfg.reg_weight < 0.0) throw ConfigError("drr: reg_weight must be >= 0");
  add_adapters(target, ds.domain_id);
  const std::string own = m2::prefix(ds.domain_id);
  const std::string adapters = adapter_prefix(ds.domain_id);
  auto movable = [&](const std::string& name) { return has_prefix(name, own) || has_prefix(name, adapters); };
  target.store.set_trainable(movable);

  EpochHooks<T> hooks;
  hooks.lr = [&](std::size_t, const std::string& name) -> std::optional<double> {
    if (movable(name)) return cfg.lr;
    return std::nullopt;
  };
  hooks.extra_loss = [&](Graph<T>& g, const BatchLoss<T>& bl) {
    return drr_penalty(g, target.store, bl, dcfg.reg_weight);
  };
  TrainResult result;
  try {
    result = train(target, ds, cfg, hooks);
  } catch (...) {
    target.store.set_trainable([](const std::string& name) { return !has_prefix(name, "reg."); });
    throw;
  }
  target.store.set_trainable([](const std::string& name) { return !has_prefix(name, "reg."); });
  return result;
}

#define MMT_INSTANTIATE(T)                                                                           \
  template void direct_transfer<T>(const MmtModel<T>&, MmtModel<T>&);                                \
  template AnnealResult anneal_adapt<T>(MmtModel<T>&, const DomainDataset&, const TrainConfig&,      \
                                        const AnnealConfig&);                                        \
  template void init_regularizer<T>(ParameterStore<T>&, Site, std::size_t, const RegularizerConfig&, \
                                    std::mt19937_64&);                                               \
  template bool has_regularizer<T>(const ParameterStore<T>&, Site);                                  \
  template Encoding<T> encode<T>(Graph<T>&, ParameterStore<T>&, Site, Var);                          \
  template Var poison<T>(Graph<T>&, ParameterStore<T>&, Site, Var);                                  \
  template Var kl_standard_normal<T>(Graph<T>&, Var, Var);                                           \
  template Var kl_sampled<T>(Graph<T>&, Var, Var, const Tensor<T>&);                                 \
  template Tensor<T> collect_site_inputs<T>(MmtModel<T>&, const DomainDataset&, Site,                \
                                            std::span<const std::size_t>);                           \
  template EncoderObjective encoder_objective<T>(Graph<T>&, ParameterStore<T>&, Site, Var);         \
  template Var poisoner_objective<T>(Graph<T>&, ParameterStore<T>&, Site, Var, bool, double);        \
  template Var drr_penalty<T>(Graph<T>&, ParameterStore<T>&, const BatchLoss<T>&, double);           \
  template RegularizerHistory train_regularizer<T>(ParameterStore<T>&, Site, const Tensor<T>&,       \
                                                   const RegularizerConfig&);                        \
  template RegularizerEval evaluate_regularizer<T>(ParameterStore<T>&, Site, const Tensor<T>&);      \
  template void import_regularizers<T>(const ParameterStore<T>&, ParameterStore<T>&);                \
  template void add_adapters<T>(MmtModel<T>&, const std::string&);                                   \
  template TrainResult drr_adapt<T>(MmtModel<T>&, const DomainDataset&, const TrainConfig&,          \
                                    const DrrConfig&);
MMT_INSTANTIATE(float)
MMT_INSTANTIATE(double)
#undef MMT_INSTANTIATE

}  // namespace mmt
