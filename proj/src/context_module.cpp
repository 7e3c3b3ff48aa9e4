// SPDX-License-Identifier: Apache-2.0
#include "mmt/context_module.hpp"

#include <array>
#include <cmath>

#include "mmt/error.hpp"

namespace mmt::m1 {

namespace {

char letter(Segment s) {
  switch (s) {
    case Segment::Interactional: return 'I';
    case Segment::Historical: return 'H';
    case Segment::Attributional: return 'A';
  }
  return '?';
}

constexpr std::array<Segment, 3> kSegments{Segment::Interactional, Segment::Historical,
                                           Segment::Attributional};

std::pair<std::size_t, std::size_t> bounds(const ContextSegments& seg, Segment s) {
  switch (s) {
    case Segment::Interactional: return {0, seg.i_end};
    case Segment::Historical: return {seg.i_end, seg.h_end};
    case Segment::Attributional: return {seg.h_end, seg.width};
  }
  return {0, 0};
}

std::size_t seg_len(const ContextSegments& seg, Segment s) {
  const auto [b, e] = bounds(seg, s);
  return e - b;
}

template <typename T>
Tensor<T> uniform(std::vector<std::size_t> shape, double limit, std::mt19937_64& rng) {
  Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> u(-limit, limit);
  for (auto& x : t.values()) x = static_cast<T>(u(rng));
  return t;
}

}  // namespace

std::string pool_weight(std::size_t layer) { return "m1.pool" + std::to_string(layer) + ".W"; }
std::string pool_bias(std::size_t layer) { return "m1.pool" + std::to_string(layer) + ".b"; }
std::string fmt_weight(std::size_t layer) { return "m1.fmt" + std::to_string(layer) + ".W"; }
std::string fmt_bias(std::size_t layer) { return "m1.fmt" + std::to_string(layer) + ".b"; }
std::string mm_scale(Segment x) { return std::string("m1.mm.s_") + letter(x); }
std::string mm_cross(Segment x, Segment y) {
  return std::string("m1.mm.W_") + letter(x) + "_" + letter(y);
}
std::string mm_bias(Segment x) { return std::string("m1.mm.b_") + letter(x); }

template <typename T>
void init(ParameterStore<T>& store, const ModelConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const std::size_t c = cfg.context_width();
  const double pool_limit = 1.0 / std::sqrt(static_cast<double>(c));
  for (std::size_t n = 2; n <= cfg.n_c; ++n) {
    if (cfg.fmt) {
      store.add(fmt_weight(n), uniform<T>({c, c}, std::sqrt(2.0 / static_cast<double>(c)), rng));
      store.add(fmt_bias(n), Tensor<T>({c}));
    } else {
      store.add(pool_weight(n), uniform<T>({c, c}, pool_limit, rng));
      store.add(pool_bias(n), Tensor<T>({c}));
    }
  }
  if (!cfg.multimodal) return;
  for (Segment x : kSegments) {
    const std::size_t nx = seg_len(cfg.segments, x);
    store.add(mm_scale(x), Tensor<T>({nx}));
    store.add(mm_bias(x), Tensor<T>({nx}));
    for (Segment y : kSegments) {
      if (y == x) continue;
      const std::size_t ny = seg_len(cfg.segments, y);
      store.add(mm_cross(x, y), uniform<T>({nx, ny}, 1.0 / std::sqrt(static_cast<double>(ny)), rng));
    }
  }
}

template <typename T>
Var multimodal_residual(Graph<T>& g, ParameterStore<T>& store, const ContextSegments& seg, Var c) {
  for (Segment x : kSegments) {
    if (seg_len(seg, x) == 0) {
      throw ConfigError("multimodal residual needs a non-empty " + to_string(x) + " segment");
    }
  }
  if (g.value(c).cols() != seg.width) {
    throw DimensionError("context width " + std::to_string(g.value(c).cols()) + " != segments width " +
                         std::to_string(seg.width));
  }
  std::array<Var, 3> parts;
  for (std::size_t k = 0; k < 3; ++k) {
    const auto [b, e] = bounds(seg, kSegments[k]);
    parts[k] = g.slice_cols(c, b, e);
  }
  std::array<Var, 3> deltas;
  for (std::size_t k = 0; k < 3; ++k) {
    const Segment x = kSegments[k];
    Var pre{};
    bool first = true;
    for (std::size_t j = 0; j < 3; ++j) {
      if (j == k) continue;
      Var term = g.matmul_t(parts[j], g.param(store.at(mm_cross(x, kSegments[j]))));
      pre = first ? term : g.add(pre, term);
      first = false;
    }
    pre = g.add_row(pre, g.param(store.at(mm_bias(x))));
    deltas[k] = g.mul_row(g.tanh(pre), g.param(store.at(mm_scale(x))));
  }
  return g.add(c, g.concat_cols(deltas));
}

template <typename T>
Var pool_layer(Graph<T>& g, Var c_prev, Var c_base, Var w, Var b, PoolGate gate) {
  const auto& prev = g.value(c_prev);
  const auto& base = g.value(c_base);
  const auto& wv = g.value(w);
  if (prev.cols() != base.cols() || wv.rows() != prev.cols() || wv.cols() != prev.cols() ||
      g.value(b).cols() != prev.cols()) {
    throw DimensionError("pool layer: c_prev " + shape_string(prev.shape()) + ", c_base " +
                         shape_string(base.shape()) + ", W " + shape_string(wv.shape()) + ", b " +
                         shape_string(g.value(b).shape()));
  }
  Var pre = g.add(g.matmul_t(c_prev, w), g.mul_row(c_prev, b));
  Var gated = gate == PoolGate::Sigmoid ? g.sigmoid(pre) : pre;
  return g.mul(gated, c_base);
}

template <typename T>
ContextOutputs forward(Graph<T>& g, ParameterStore<T>& store, const ModelConfig& cfg, Var contexts,
                       const VarHook& c2_hook) {
  if (g.value(contexts).cols() != cfg.context_width()) {
    throw DimensionError("context batch has " + std::to_string(g.value(contexts).cols()) +
                         " features, model expects " + std::to_string(cfg.context_width()));
  }
  ContextOutputs out;
  out.base = cfg.multimodal ? multimodal_residual(g, store, cfg.segments, contexts) : contexts;
  Var x = out.base;
  for (std::size_t n = 2; n <= cfg.n_c; ++n) {
    if (cfg.fmt) {
      Var w = g.param(store.at(fmt_weight(n)));
      Var b = g.param(store.at(fmt_bias(n)));
      x = g.relu(g.add_row(g.matmul_t(x, w), b));
    } else {
      Var w = g.param(store.at(pool_weight(n)));
      Var b = g.param(store.at(pool_bias(n)));
      x = pool_layer(g, x, out.base, w, b, cfg.pool_gate);
    }
    if (n == 2) {
      if (c2_hook) x = c2_hook(x);
      out.c2 = x;
    }
  }
  out.pooled = x;
  return out;
}

template <typename T>
Tensor<T> pool_layer(const Tensor<T>& c_prev, const Tensor<T>& c_base, const Tensor<T>& w,
                     const Tensor<T>& b, PoolGate gate) {
  Graph<T> g;
  Var out = pool_layer(g, g.constant(c_prev), g.constant(c_base), g.constant(w), g.constant(b), gate);
  Tensor<T> v = g.value(out);
  if (c_prev.rank() == 1) return Tensor<T>({v.size()}, std::vector<T>(v.values().begin(), v.values().end()));
  return v;
}

#define MMT_INSTANTIATE(T)                                                                          \
  template void init<T>(ParameterStore<T>&, const ModelConfig&, std::mt19937_64&);                  \
  template Var multimodal_residual<T>(Graph<T>&, ParameterStore<T>&, const ContextSegments&, Var);  \
  template Var pool_layer<T>(Graph<T>&, Var, Var, Var, Var, PoolGate);                              \
  template ContextOutputs forward<T>(Graph<T>&, ParameterStore<T>&, const ModelConfig&, Var,        \
                                     const VarHook&);                                               \
  template Tensor<T> pool_layer<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,            \
                                   const Tensor<T>&, PoolGate);
MMT_INSTANTIATE(float)
MMT_INSTANTIATE(double)
#undef MMT_INSTANTIATE

}  // namespace mmt::m1
