// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

#include "mmt/data.hpp"

namespace mmt {

/// Gate used inside the multiplicative pooling layers. Identity exists only
/// so algebraic properties of the pooling can be checked exactly.
enum class PoolGate { Sigmoid, Identity };

struct LossConfig {
  bool context_bias_enabled = true;
  /// Subtract each positive's context bias from its loss (self-paced curriculum).
  bool attenuation_enabled = false;
  std::size_t n_item_neg = 1;
  std::size_t n_ctx_neg = 1;
  /// Weight on ||w_C||^2 + b_C^2, active only with attenuation.
  double curriculum_l2 = 1e-3;
};

struct ModelConfig {
  ContextSegments segments;
  std::size_t embedding_dim = 200;
  /// Highest pooled order; layers 2..n_c are built.
  std::size_t n_c = 3;
  /// Tower depths: n_u - 1 ReLU layers on the user side, n_v - 1 on the item side.
  std::size_t n_u = 2;
  std::size_t n_v = 2;
  bool multimodal = false;
  /// Replace multiplicative pooling by plain ReLU layers of the same width.
  bool fmt = false;
  PoolGate pool_gate = PoolGate::Sigmoid;
  Feedback feedback = Feedback::Explicit;
  double dropout = 0.1;
  LossConfig loss;

  std::size_t context_width() const { return segments.width; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

inline bool operator==(const LossConfig& a, const LossConfig& b) {
  return a.context_bias_enabled == b.context_bias_enabled &&
         a.attenuation_enabled == b.attenuation_enabled && a.n_item_neg == b.n_item_neg &&
         a.n_ctx_neg == b.n_ctx_neg && a.curriculum_l2 == b.curriculum_l2;
}

}  // namespace mmt
