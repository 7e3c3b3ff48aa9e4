// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>

#include "mmt/graph.hpp"
#include "mmt/model_config.hpp"

namespace mmt::m4 {

inline const std::string kWeight = "m4.w_c";
inline const std::string kBias = "m4.b_c";

/// w_C and b_C start at zero.
template <typename T>
void init(ParameterStore<T>& store, const ModelConfig& cfg);

/// s_c = w_C . pooled + b_C per row -> [B, 1].
template <typename T>
Var context_bias(Graph<T>& g, ParameterStore<T>& store, Var pooled);

/// u . v (+ s_c) per row.
template <typename T>
Var score_implicit(Graph<T>& g, Var user, Var item, std::optional<Var> s_c);

/// u . v (+ s_c) + s_u + s_v + s per row; `global` is [1, 1].
template <typename T>
Var score_explicit(Graph<T>& g, Var user, Var item, std::optional<Var> s_c, Var s_u, Var s_v,
                   Var global);

struct LossTerms {
  Var objective;  // what gets differentiated
  Var reported;   // un-attenuated value for logs and validation
};

/// mean over positives of (1 - s+)^2 + sum of that positive's squared negative
/// scores. `negatives` holds all negative scores ([B * k, 1]).
/// `s_c_pos` is required when attenuation is on.
template <typename T>
LossTerms loss_implicit(Graph<T>& g, ParameterStore<T>& store, const LossConfig& cfg, Var positives,
                        Var negatives, std::optional<Var> s_c_pos);

/// mean (r - r_hat)^2, optionally attenuated by s_c.
template <typename T>
LossTerms loss_explicit(Graph<T>& g, ParameterStore<T>& store, const LossConfig& cfg, Var predictions,
                        Var ratings, std::optional<Var> s_c);

}  // namespace mmt::m4
