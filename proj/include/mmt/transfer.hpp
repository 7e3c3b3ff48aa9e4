// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mmt/adapter.hpp"
#include "mmt/model.hpp"
#include "mmt/trainer.hpp"

namespace mmt {

enum class TransferMethod { Direct, Anneal, Drr };

std::string to_string(TransferMethod m);
TransferMethod transfer_method_from_string(const std::string& s);

/// m1., m3. and m4. parameters move between domains; m2. never does.
bool is_shared_parameter(const std::string& name);

/// Copies every shared parameter of `source` into `target` bit for bit and
/// resets their optimizer state. TransferError names each incompatible entry.
template <typename T>
void direct_transfer(const MmtModel<T>& source, MmtModel<T>& target);

/// eta0 * exp(-lambda * b).
double anneal_lr(std::size_t b, double eta0, double lambda);

struct AnnealConfig {
  double eta0 = 1e-3;
  /// <= 0 picks ln(1000) / batches_per_epoch, so eta decays to 1e-3 eta0.
  double lambda = 0.0;
  /// Cap on the embedding-only epochs after annealing (early stopping applies).
  std::size_t followup_epochs = 30;
};

struct AnnealResult {
  double lambda = 0.0;
  /// Shared-module learning rate applied at each batch of the annealing epoch.
  std::vector<double> shared_lrs;
  double anneal_loss = 0.0;
  TrainResult followup;
};

/// One epoch where shared modules step with anneal_lr(b) for b = 1, 2, ... and
/// the domain's embeddings with eta0, then embedding-only training.
template <typename T>
AnnealResult anneal_adapt(MmtModel<T>& target, const DomainDataset& ds, const TrainConfig& cfg,
                          const AnnealConfig& acfg);

// Distributional regularizers.

std::string regularizer_prefix(Site s);
std::size_t site_width(const ModelConfig& cfg, Site s);

struct RegularizerConfig {
  /// 0 picks max(8, width / 4).
  std::size_t latent = 0;
  /// 0 picks 2 * latent.
  std::size_t hidden = 0;
  std::size_t epochs = 10;
  double lr = 1e-3;
  std::size_t batch_size = 256;
  /// Alternation schedule: encoder steps then poisoner steps per batch.
  std::size_t encoder_steps = 1;
  std::size_t poisoner_steps = 1;
  /// Learning rate decays linearly to lr * final_lr_fraction over training.
  double final_lr_fraction = 0.01;
  /// Keep the -log ||P(x)|| term of the poisoner objective.
  bool norm_term = true;
  double poison_eps = 1e-8;
  double divergence_limit = 1e3;
  std::uint64_t seed = 1;
};

/// Bound applied as L tanh(raw / L) to encoder log-variances.
inline constexpr double kLogvarBound = 6.0;

template <typename T>
struct Encoding {
  Var mu;
  Var logvar;
};

template <typename T>
void init_regularizer(ParameterStore<T>& store, Site s, std::size_t width, const RegularizerConfig& cfg,
                      std::mt19937_64& rng);
template <typename T>
bool has_regularizer(const ParameterStore<T>& store, Site s);

template <typename T>
Encoding<T> encode(Graph<T>& g, ParameterStore<T>& store, Site s, Var x);
template <typename T>
Var poison(Graph<T>& g, ParameterStore<T>& store, Site s, Var x);

/// 0.5 sum(exp(lv) + mu^2 - 1 - lv) per row -> [B, 1].
template <typename T>
Var kl_standard_normal(Graph<T>& g, Var mu, Var logvar);
double kl_standard_normal(std::span<const double> mu, std::span<const double> logvar);

/// Single-sample estimate log q(z) - log p(z) with z = mu + exp(lv / 2) xi,
/// per row. Its expectation over xi is the closed form above.
template <typename T>
Var kl_sampled(Graph<T>& g, Var mu, Var logvar, const Tensor<T>& xi);

/// Site values from an eval-mode forward pass over `indices` -> [N, width].
template <typename T>
Tensor<T> collect_site_inputs(MmtModel<T>& model, const DomainDataset& ds, Site s,
                              std::span<const std::size_t> indices);

struct RegularizerEval {
  double kl_clean = 0.0;
  double kl_poisoned = 0.0;
  double poison_norm = 0.0;
};

struct RegularizerHistory {
  std::vector<RegularizerEval> epochs;
};

struct EncoderObjective {
  Var loss;  // kl_clean - kl_poisoned
  Var kl_clean;
  Var kl_poisoned;
};

/// Mean KLs of clean and poisoned encodings; the poison enters as a constant.
template <typename T>
EncoderObjective encoder_objective(Graph<T>& g, ParameterStore<T>& store, Site s, Var x);

/// KL(poisoned) - mean log(||P(x)|| + eps), the last term only when `norm_term`.
template <typename T>
Var poisoner_objective(Graph<T>& g, ParameterStore<T>& store, Site s, Var x, bool norm_term, double eps);

/// Alternates encoder steps on KL(clean) - KL(poisoned) with poisoner steps on
/// KL(poisoned) - log(||P(x)|| + eps). The poisoner output layer starts at
/// zero, so training begins from unpoisoned inputs. Throws
/// DivergenceError when a batch's clean KL exceeds cfg.divergence_limit.
template <typename T>
RegularizerHistory train_regularizer(ParameterStore<T>& store, Site s, const Tensor<T>& inputs,
                                     const RegularizerConfig& cfg);

template <typename T>
RegularizerEval evaluate_regularizer(ParameterStore<T>& store, Site s, const Tensor<T>& inputs);

/// Copies all reg.* parameters (frozen) from `source` into `target`.
template <typename T>
void import_regularizers(const ParameterStore<T>& source, ParameterStore<T>& target);

struct DrrConfig {
  double reg_weight = 0.1;
};

/// reg_weight * sum over sites of the mean KL of the positives' site values.
template <typename T>
Var drr_penalty(Graph<T>& g, ParameterStore<T>& store, const BatchLoss<T>& bl, double reg_weight);

/// Trains zero-initialised adapters and the domain's embeddings with the task
/// loss plus reg_weight * sum over sites of the mean KL of the adapted site
/// values. Shared modules stay frozen.
template <typename T>
TrainResult drr_adapt(MmtModel<T>& target, const DomainDataset& ds, const TrainConfig& cfg,
                      const DrrConfig& dcfg);

/// Adds zero adapters for every site; no-op for sites that already have one.
template <typename T>
void add_adapters(MmtModel<T>& model, const std::string& domain);

}  // namespace mmt
