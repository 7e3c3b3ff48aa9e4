// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mmt/conditioning.hpp"
#include "mmt/context_module.hpp"
#include "mmt/data.hpp"
#include "mmt/ranking_loss.hpp"

namespace mmt {

/// Rows of (user, item, context[, rating]) scored together.
template <typename T>
struct CandidateBatch {
  std::vector<int> users;
  std::vector<int> items;
  std::vector<T> contexts;  // row-major [size, width]
  std::vector<T> ratings;   // explicit feedback only
  std::size_t width = 0;

  explicit CandidateBatch(std::size_t context_width = 0) : width(context_width) {}
  std::size_t size() const { return users.size(); }
  void push(int user, int item, std::span<const float> context, std::optional<float> rating = {});
  void push(const Interaction& t) { push(t.user, t.item, t.context, t.rating); }
  Tensor<T> context_tensor() const;
};

struct ForwardOptions {
  bool training = false;
  std::mt19937_64* rng = nullptr;  // dropout stream, needed when training
  bool use_adapters = true;
};

struct ForwardResult {
  m1::ContextOutputs context;
  m3::Representation rep;
  std::optional<Var> s_c;
  Var score;  // [B, 1]; predicted rating in explicit mode
};

/// Shared modules (m1, m3, m4) plus one embedding set per domain, all in one
/// store. The modules hold no state of their own, so copying the model copies
/// everything.
template <typename T>
class MmtModel {
 public:
  ModelConfig config;
  ParameterStore<T> store;

  MmtModel() = default;
  /// Initialises the shared modules from `seed`.
  MmtModel(ModelConfig cfg, std::uint64_t seed);

  /// Adds embeddings for `ds` (and biases in explicit mode).
  void add_domain(const DomainDataset& ds, std::uint64_t seed);
  bool has_domain(const std::string& domain) const;
  std::vector<std::string> domains() const;

  ForwardResult forward(Graph<T>& g, const std::string& domain, const CandidateBatch<T>& batch,
                        const ForwardOptions& opt = {});

  /// Eval-mode scores, computed in chunks.
  std::vector<double> score(const std::string& domain, const CandidateBatch<T>& batch);

  template <typename U>
  MmtModel<U> cast() const {
    MmtModel<U> out;
    out.config = config;
    for (const auto& [name, p] : store) {
      auto& q = out.store.add(name, p.value.template cast<U>());
      q.trainable = p.trainable;
    }
    return out;
  }
};

/// Loss over the positives `indices` of `ds`. Implicit mode draws
/// n_item_neg + n_ctx_neg negatives per positive from `neg_rng` and scores
/// them in the same forward pass after the positives.
template <typename T>
struct BatchLoss {
  m4::LossTerms terms;
  ForwardResult forward;
  std::size_t n_positive = 0;
};

template <typename T>
BatchLoss<T> batch_loss(Graph<T>& g, MmtModel<T>& model, const DomainDataset& ds,
                        std::span<const std::size_t> indices, std::mt19937_64& neg_rng,
                        const ForwardOptions& opt = {});

}  // namespace mmt
