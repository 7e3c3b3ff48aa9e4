// SPDX-License-Identifier: Apache-2.0
#include "mmt/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "mmt/adapter.hpp"
#include "mmt/embeddings.hpp"
#include "mmt/error.hpp"

namespace mmt {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
  if (batch_size == 0) throw ConfigError("train: batch size must be positive");
  if (max_epochs == 0) throw ConfigError("train: need at least one epoch");
}

bool touches_domain(const std::string& name, const std::string& domain) {
  return has_prefix(name, "m1.") || has_prefix(name, "m3.") || has_prefix(name, "m4.") ||
         has_prefix(name, m2::prefix(domain)) || has_prefix(name, adapter_prefix(domain));
}

template <typename T>
double run_epoch(MmtModel<T>& model, const DomainDataset& ds, AdamConfig& adam, const TrainConfig& cfg,
                 std::mt19937_64& rng, const EpochHooks<T>& hooks) {
  std::vector<std::size_t> order = ds.splits.train;
  if (order.empty()) throw SplitError("domain '" + ds.domain_id + "' has an empty train split");
  std::shuffle(order.begin(), order.end(), rng);

  ForwardOptions opt;
  opt.training = true;
  opt.rng = &rng;
  double total = 0.0;
  std::size_t b = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size, ++b) {
    const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
    std::span<const std::size_t> idx(order.data() + begin, end - begin);
    const auto where = [&] {
      return " on domain '" + ds.domain_id + "' at batch " + std::to_string(b) + " (lr " + std::to_string(cfg.lr) + ")";
    };
    Graph<T> g;
    double reported = 0.0;
    try {
      auto bl = batch_loss(g, model, ds, idx, rng, opt);
      Var objective = bl.terms.objective;
      if (hooks.extra_loss) objective = g.add(objective, hooks.extra_loss(g, bl));
      reported = static_cast<double>(g.scalar(bl.terms.reported));
      const double value = static_cast<double>(g.scalar(objective));
      if (!std::isfinite(value) || !std::isfinite(reported)) {
        throw NumericError("non-finite loss (objective " + std::to_string(value) + ", reported " +
                           std::to_string(reported) + ")");
      }
      g.backward(objective);
    } catch (const NumericError& e) {
      throw NumericError(e.what() + where());
    }
    total += reported * static_cast<double>(idx.size());
    if (hooks.lr) {
      adam_step(model.store, adam, [&](const std::string& name) { return hooks.lr(b, name); });
    } else {
      adam_step(model.store, adam, [&](const std::string& name) -> std::optional<double> {
        if (!touches_domain(name, ds.domain_id)) return std::nullopt;
        return cfg.lr;
      });
    }
    if (hooks.on_batch) hooks.on_batch(b);
  }
  return total / static_cast<double>(order.size());
}

template <typename T>
double validation_metric(MmtModel<T>& model, const DomainDataset& ds,
                         std::span<const std::size_t> indices, std::uint64_t seed) {
  if (indices.empty()) throw EvalError("validation metric over an empty split");
  constexpr std::size_t kChunk = 1024;
  std::mt19937_64 rng(seed);
  double total = 0.0;
  for (std::size_t begin = 0; begin < indices.size(); begin += kChunk) {
    const std::size_t end = std::min(indices.size(), begin + kChunk);
    Graph<T> g;
    auto bl = batch_loss(g, model, ds, indices.subspan(begin, end - begin), rng);
    total += static_cast<double>(g.scalar(bl.terms.reported)) * static_cast<double>(end - begin);
  }
  return total / static_cast<double>(indices.size());
}

template <typename T>
TrainResult train(MmtModel<T>& model, const DomainDataset& ds, const TrainConfig& cfg,
                  const EpochHooks<T>& hooks, const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  std::mt19937_64 rng(cfg.seed);
  AdamConfig adam;
  adam.lr = cfg.lr;

  TrainResult result;
  std::optional<ParameterStore<T>> best;
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = clock::now();
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = run_epoch(model, ds, adam, cfg, rng, hooks);
    log.validation = ds.splits.validation.empty()
                         ? log.train_loss
                         : validation_metric(model, ds, ds.splits.validation);
    log.seconds = std::chrono::duration<double>(clock::now() - t0).count();
    result.epochs.push_back(log);
    if (on_epoch) on_epoch(log);

    if (result.best_epoch == 0 || log.validation < result.best_validation) {
      result.best_epoch = epoch;
      result.best_validation = log.validation;
      since_best = 0;
      if (cfg.patience > 0) best = model.store;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      break;
    }
  }
  if (best) model.store = std::move(*best);
  result.seconds = std::chrono::duration<double>(clock::now() - start).count();
  return result;
}

#define MMT_INSTANTIATE(T)                                                                          \
  template double run_epoch<T>(MmtModel<T>&, const DomainDataset&, AdamConfig&, const TrainConfig&, \
                               std::mt19937_64&, const EpochHooks<T>&);                             \
  template double validation_metric<T>(MmtModel<T>&, const DomainDataset&,                          \
                                       std::span<const std::size_t>, std::uint64_t);                \
  template TrainResult train<T>(MmtModel<T>&, const DomainDataset&, const TrainConfig&,             \
                                const EpochHooks<T>&, const std::function<void(const EpochLog&)>&);
MMT_INSTANTIATE(float)
MMT_INSTANTIATE(double)
#undef MMT_INSTANTIATE

}  // namespace mmt
