// SPDX-License-Identifier: Apache-2.0
#include "mmt/ranking_loss.hpp"

#include "mmt/error.hpp"

namespace mmt::m4 {

template <typename T>
void init(ParameterStore<T>& store, const ModelConfig& cfg) {
  store.add(kWeight, Tensor<T>({cfg.context_width()}));
  store.add(kBias, Tensor<T>({1}));
}

template <typename T>
Var context_bias(Graph<T>& g, ParameterStore<T>& store, Var pooled) {
  return g.add_row(g.matmul_t(pooled, g.param(store.at(kWeight))), g.param(store.at(kBias)));
}

template <typename T>
Var score_implicit(Graph<T>& g, Var user, Var item, std::optional<Var> s_c) {
  Var s = g.row_dot(user, item);
  return s_c ? g.add(s, *s_c) : s;
}

template <typename T>
Var score_explicit(Graph<T>& g, Var user, Var item, std::optional<Var> s_c, Var s_u, Var s_v,
                   Var global) {
  Var s = score_implicit(g, user, item, s_c);
  return g.add_row(g.add(g.add(s, s_u), s_v), global);
}

namespace {

template <typename T>
Var attenuate(Graph<T>& g, ParameterStore<T>& store, const LossConfig& cfg, Var loss,
              std::optional<Var> s_c) {
  if (!cfg.attenuation_enabled || !cfg.context_bias_enabled) return loss;
  if (!s_c) throw StateError("attenuation needs the positives' context bias");
  Var out = g.sub(loss, g.mean(*s_c));
  if (cfg.curriculum_l2 > 0.0) {
    Var w = g.param(store.at(kWeight));
    Var b = g.param(store.at(kBias));
    Var penalty = g.add(g.sum(g.square(w)), g.square(b));
    out = g.add(out, g.scale(penalty, static_cast<T>(cfg.curriculum_l2)));
  }
  return out;
}

}  // namespace

template <typename T>
LossTerms loss_implicit(Graph<T>& g, ParameterStore<T>& store, const LossConfig& cfg, Var positives,
                        Var negatives, std::optional<Var> s_c_pos) {
  const std::size_t batch = g.value(positives).rows();
  if (batch == 0) throw DimensionError("implicit loss over an empty batch");
  const T inv = T(1) / static_cast<T>(batch);
  Var pos_err = g.sum(g.square(g.add_scalar(g.scale(positives, T(-1)), T(1))));
  Var neg_err = g.sum(g.square(negatives));
  Var reported = g.scale(g.add(pos_err, neg_err), inv);
  return {attenuate(g, store, cfg, reported, s_c_pos), reported};
}

template <typename T>
LossTerms loss_explicit(Graph<T>& g, ParameterStore<T>& store, const LossConfig& cfg, Var predictions,
                        Var ratings, std::optional<Var> s_c) {
  if (g.value(predictions).rows() == 0) throw DimensionError("explicit loss over an empty batch");
  Var reported = g.mean(g.square(g.sub(ratings, predictions)));
  return {attenuate(g, store, cfg, reported, s_c), reported};
}

#define MMT_INSTANTIATE(T)                                                                         \
  template void init<T>(ParameterStore<T>&, const ModelConfig&);                                   \
  template Var context_bias<T>(Graph<T>&, ParameterStore<T>&, Var);                                \
  template Var score_implicit<T>(Graph<T>&, Var, Var, std::optional<Var>);                         \
  template Var score_explicit<T>(Graph<T>&, Var, Var, std::optional<Var>, Var, Var, Var);          \
  template LossTerms loss_implicit<T>(Graph<T>&, ParameterStore<T>&, const LossConfig&, Var, Var,  \
                                      std::optional<Var>);                                         \
  template LossTerms loss_explicit<T>(Graph<T>&, ParameterStore<T>&, const LossConfig&, Var, Var,  \
                                      std::optional<Var>);
MMT_INSTANTIATE(float)
MMT_INSTANTIATE(double)
#undef MMT_INSTANTIATE

}  // namespace mmt::m4
