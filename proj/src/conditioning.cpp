// SPDX-License-Identifier: Apache-2.0
#include "mmt/conditioning.hpp"

#include <cmath>

#include "mmt/error.hpp"

namespace mmt::m3 {

namespace {

const char* side_name(m2::EntityKind side) { return side == m2::EntityKind::User ? "user" : "item"; }

template <typename T>
Tensor<T> uniform(std::vector<std::size_t> shape, double limit, std::mt19937_64& rng) {
  Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> u(-limit, limit);
  for (auto& x : t.values()) x = static_cast<T>(u(rng));
  return t;
}

}  // namespace

std::string gate(m2::EntityKind side) {
  return side == m2::EntityKind::User ? "m3.gate_u" : "m3.gate_v";
}

std::string tower_weight(m2::EntityKind side, std::size_t layer) {
  return std::string("m3.") + side_name(side) + std::to_string(layer) + ".W";
}

std::string tower_bias(m2::EntityKind side, std::size_t layer) {
  return std::string("m3.") + side_name(side) + std::to_string(layer) + ".b";
}

template <typename T>
void init(ParameterStore<T>& store, const ModelConfig& cfg, std::mt19937_64& rng) {
  const std::size_t c = cfg.context_width();
  const std::size_t d = cfg.embedding_dim;
  const double gate_limit = 1.0 / std::sqrt(static_cast<double>(c));
  const double tower_limit = std::sqrt(2.0 / static_cast<double>(d));
  store.add(gate(m2::EntityKind::User), uniform<T>({d, c}, gate_limit, rng));
  store.add(gate(m2::EntityKind::Item), uniform<T>({d, c}, gate_limit, rng));
  for (auto [side, depth] : {std::pair{m2::EntityKind::User, cfg.n_u}, std::pair{m2::EntityKind::Item, cfg.n_v}}) {
    for (std::size_t i = 2; i <= depth; ++i) {
      store.add(tower_weight(side, i), uniform<T>({d, d}, tower_limit, rng));
      store.add(tower_bias(side, i), Tensor<T>({d}));
    }
  }
}

template <typename T>
Var condition(Graph<T>& g, Var e, Var pooled, Var gate_w) {
  const auto& ev = g.value(e);
  const auto& pv = g.value(pooled);
  const auto& wv = g.value(gate_w);
  if (wv.rows() != ev.cols() || wv.cols() != pv.cols() || ev.rows() != pv.rows()) {
    throw DimensionError("condition: e " + shape_string(ev.shape()) + ", pooled " +
                         shape_string(pv.shape()) + ", gate " + shape_string(wv.shape()));
  }
  return g.mul(e, g.sigmoid(g.matmul_t(pooled, gate_w)));
}

template <typename T>
Var tower(Graph<T>& g, ParameterStore<T>& store, m2::EntityKind side, std::size_t depth, Var x) {
  for (std::size_t i = 2; i <= depth; ++i) {
    Var w = g.param(store.at(tower_weight(side, i)));
    Var b = g.param(store.at(tower_bias(side, i)));
    x = g.relu(g.add_row(g.matmul_t(x, w), b));
  }
  return x;
}

template <typename T>
Representation represent(Graph<T>& g, ParameterStore<T>& store, const ModelConfig& cfg,
                         const std::string& domain, std::span<const int> users,
                         std::span<const int> items, Var pooled, const RepresentOptions& opt) {
  if (users.size() != items.size()) {
    throw DimensionError("represent: " + std::to_string(users.size()) + " users vs " +
                         std::to_string(items.size()) + " items");
  }
  Representation r;
  Var eu = m2::lookup(g, store, domain, m2::EntityKind::User, users);
  Var ev = m2::lookup(g, store, domain, m2::EntityKind::Item, items);
  r.gated_user = condition(g, eu, pooled, g.param(store.at(gate(m2::EntityKind::User))));
  r.gated_item = condition(g, ev, pooled, g.param(store.at(gate(m2::EntityKind::Item))));
  if (opt.user_hook) r.gated_user = opt.user_hook(r.gated_user);
  if (opt.item_hook) r.gated_item = opt.item_hook(r.gated_item);
  Var xu = r.gated_user;
  Var xv = r.gated_item;
  if (opt.training && opt.dropout > 0.0) {
    if (opt.rng == nullptr) throw StateError("dropout in training mode needs an rng");
    xu = g.dropout(xu, opt.dropout, *opt.rng, true);
    xv = g.dropout(xv, opt.dropout, *opt.rng, true);
  }
  r.user = tower(g, store, m2::EntityKind::User, cfg.n_u, xu);
  r.item = tower(g, store, m2::EntityKind::Item, cfg.n_v, xv);
  return r;
}

template <typename T>
Tensor<T> condition(const Tensor<T>& e, const Tensor<T>& pooled, const Tensor<T>& gate_w) {
  Graph<T> g;
  Tensor<T> v = g.value(condition(g, g.constant(e), g.constant(pooled), g.constant(gate_w)));
  if (e.rank() == 1) return Tensor<T>({v.size()}, std::vector<T>(v.values().begin(), v.values().end()));
  return v;
}

#define MMT_INSTANTIATE(T)                                                                          \
  template void init<T>(ParameterStore<T>&, const ModelConfig&, std::mt19937_64&);                  \
  template Var condition<T>(Graph<T>&, Var, Var, Var);                                              \
  template Var tower<T>(Graph<T>&, ParameterStore<T>&, m2::EntityKind, std::size_t, Var);           \
  template Representation represent<T>(Graph<T>&, ParameterStore<T>&, const ModelConfig&,           \
                                       const std::string&, std::span<const int>,                    \
                                       std::span<const int>, Var, const RepresentOptions&);         \
  template Tensor<T> condition<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);
MMT_INSTANTIATE(float)
MMT_INSTANTIATE(double)
#undef MMT_INSTANTIATE

}  // namespace mmt::m3
