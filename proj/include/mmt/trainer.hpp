// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "mmt/adam.hpp"
#include "mmt/model.hpp"

namespace mmt {

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 30;
  /// Epochs without validation improvement before stopping; 0 disables early stopping.
  std::size_t patience = 3;
  std::uint64_t seed = 1;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double validation = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;
  double best_validation = 0.0;
  double seconds = 0.0;
};

template <typename T>
struct EpochHooks {
  /// Learning rate per parameter for batch b (0-based within the epoch).
  /// Empty: cfg.lr for the parameters the domain touches.
  std::function<std::optional<double>(std::size_t b, const std::string& name)> lr;
  /// Extra term added to the differentiated objective.
  std::function<Var(Graph<T>&, const BatchLoss<T>&)> extra_loss;
  std::function<void(std::size_t b)> on_batch;
};

/// Parameters a training run on `domain` may update: shared modules, the
/// domain's embeddings and its adapters.
bool touches_domain(const std::string& name, const std::string& domain);

/// One shuffled pass over the train split. Returns the mean reported loss.
template <typename T>
double run_epoch(MmtModel<T>& model, const DomainDataset& ds, AdamConfig& adam, const TrainConfig& cfg,
                 std::mt19937_64& rng, const EpochHooks<T>& hooks = {});

/// Explicit: MSE on the split. Implicit: the ranking loss with negatives drawn
/// from a fixed seed, so repeated calls see the same candidates.
template <typename T>
double validation_metric(MmtModel<T>& model, const DomainDataset& ds,
                         std::span<const std::size_t> indices, std::uint64_t seed = 7);

/// Trains up to cfg.max_epochs with early stopping on the validation split and
/// restores the best epoch's parameters.
template <typename T>
TrainResult train(MmtModel<T>& model, const DomainDataset& ds, const TrainConfig& cfg,
                  const EpochHooks<T>& hooks = {},
                  const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace mmt
