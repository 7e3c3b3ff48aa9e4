// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <span>
#include <string>

#include "mmt/context_module.hpp"
#include "mmt/embeddings.hpp"

namespace mmt::m3 {

std::string gate(m2::EntityKind side);
std::string tower_weight(m2::EntityKind side, std::size_t layer);
std::string tower_bias(m2::EntityKind side, std::size_t layer);

/// Gates U(+-1/sqrt|C|), tower weights U(+-sqrt(2/d)), biases 0.
template <typename T>
void init(ParameterStore<T>& store, const ModelConfig& cfg, std::mt19937_64& rng);

/// e * sigmoid(gate_W . pooled), row by row.
template <typename T>
Var condition(Graph<T>& g, Var e, Var pooled, Var gate_w);

/// Layers 2..depth of relu(W x + b); depth 1 returns x.
template <typename T>
Var tower(Graph<T>& g, ParameterStore<T>& store, m2::EntityKind side, std::size_t depth, Var x);

struct Representation {
  Var gated_user;  // after conditioning and the optional adapter hook
  Var gated_item;
  Var user;        // tower outputs
  Var item;
};

struct RepresentOptions {
  m1::VarHook user_hook;
  m1::VarHook item_hook;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;
  bool training = false;
};

/// lookup -> condition -> (hook) -> dropout -> tower on both sides.
template <typename T>
Representation represent(Graph<T>& g, ParameterStore<T>& store, const ModelConfig& cfg,
                         const std::string& domain, std::span<const int> users,
                         std::span<const int> items, Var pooled, const RepresentOptions& opt = {});

template <typename T>
Tensor<T> condition(const Tensor<T>& e, const Tensor<T>& pooled, const Tensor<T>& gate_w);

}  // namespace mmt::m3
