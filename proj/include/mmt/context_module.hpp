// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <random>
#include <string>

#include "mmt/graph.hpp"
#include "mmt/model_config.hpp"

namespace mmt::m1 {

// Parameter names under "m1.".
std::string pool_weight(std::size_t layer);
std::string pool_bias(std::size_t layer);
std::string fmt_weight(std::size_t layer);
std::string fmt_bias(std::size_t layer);
std::string mm_scale(Segment x);
/// Cross-modal matrix W_{x <- y}, mapping segment y onto segment x.
std::string mm_cross(Segment x, Segment y);
std::string mm_bias(Segment x);

/// Pool layers W ~ U(+-1/sqrt|C|), b = 0; multimodal scales start at zero so
/// the residual is an exact no-op at initialisation.
template <typename T>
void init(ParameterStore<T>& store, const ModelConfig& cfg, std::mt19937_64& rng);

/// c + [d_I, d_H, d_A] with d_X = s_X * tanh(W_{X<-Y} c_Y + W_{X<-Z} c_Z + b_X).
template <typename T>
Var multimodal_residual(Graph<T>& g, ParameterStore<T>& store, const ContextSegments& seg, Var c);

/// gate(W c_prev + b * c_prev) * c_base.
template <typename T>
Var pool_layer(Graph<T>& g, Var c_prev, Var c_base, Var w, Var b, PoolGate gate);

struct ContextOutputs {
  Var base;    // context after the optional multimodal residual
  Var c2;      // first pooled level (after the optional c2 hook)
  Var pooled;  // final level c^{n_c}
};

/// Hook applied to c2 before deeper layers consume it (identity when empty).
using VarHook = std::function<Var(Var)>;

template <typename T>
ContextOutputs forward(Graph<T>& g, ParameterStore<T>& store, const ModelConfig& cfg, Var contexts,
                       const VarHook& c2_hook = {});

// Single-vector conveniences over constant tensors.
template <typename T>
Tensor<T> pool_layer(const Tensor<T>& c_prev, const Tensor<T>& c_base, const Tensor<T>& w,
                     const Tensor<T>& b, PoolGate gate = PoolGate::Sigmoid);

}  // namespace mmt::m1
