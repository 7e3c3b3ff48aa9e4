// SPDX-License-Identifier: Apache-2.0
#include "mmt/graph.hpp"

#include <cmath>
#include <string>

#include "mmt/error.hpp"

namespace mmt {

namespace {

template <typename T>
Tensor<T> as_matrix(Tensor<T> t) {
  if (t.rank() == 2) return t;
  const std::size_t n = t.size();
  std::vector<T> v(t.values().begin(), t.values().end());
  return Tensor<T>({1, n}, std::move(v));
}

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

std::string dims(std::size_t r, std::size_t c) {
  return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
}

}  // namespace

template <typename T>
Var Graph<T>::push(Tensor<T> value, bool requires_grad, BackwardFn fn) {
  if (!value.all_finite()) {
    throw NumericError("non-finite value produced by graph node " + std::to_string(nodes_.size()));
  }
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Tensor<T>& Graph<T>::grad_of(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size()) n.grad = Tensor<T>(n.value.shape());
  return n.grad;
}

template <typename T>
Tensor<T> Graph<T>::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.size() == n.value.size()) return n.grad;
  return Tensor<T>(n.value.shape());
}

template <typename T>
T Graph<T>::scalar(Var v) const {
  const auto& t = nodes_[v.id].value;
  if (t.size() != 1) throw DimensionError("scalar(): node is " + shape_string(t.shape()));
  return t[0];
}

template <typename T>
void Graph<T>::check_rows_match(Var a, Var b, const char* what) const {
  const auto& x = node(a).value;
  const auto& y = node(b).value;
  if (x.rows() != y.rows() || x.cols() != y.cols()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + dims(x.rows(), x.cols()) +
                         " vs " + dims(y.rows(), y.cols()));
  }
}

template <typename T>
Var Graph<T>::constant(Tensor<T> value) {
  return push(as_matrix(std::move(value)), false, nullptr);
}

template <typename T>
Var Graph<T>::param(Parameter<T>& p) {
  Parameter<T>* target = &p;
  return push(as_matrix(p.value), p.trainable, [target](Graph& g, std::uint32_t self) {
    const auto& gsrc = g.nodes_[self].grad;
    auto dst = target->grad.values();
    auto s = gsrc.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s[i];
  });
}

template <typename T>
Var Graph<T>::gather(Parameter<T>& table, std::span<const int> ids) {
  const std::size_t n = table.value.rows();
  const std::size_t d = table.value.cols();
  Tensor<T> out({ids.size(), d});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const int id = ids[r];
    if (id < 0 || static_cast<std::size_t>(id) >= n) {
      throw IndexError("row " + std::to_string(id) + " out of range for " + table.name + " with " +
                       std::to_string(n) + " rows");
    }
    const auto src = table.value.row(static_cast<std::size_t>(id));
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  Parameter<T>* target = &table;
  std::vector<int> rows(ids.begin(), ids.end());
  return push(std::move(out), table.trainable,
              [target, rows = std::move(rows), d](Graph& g, std::uint32_t self) {
                const auto& gr = g.nodes_[self].grad;
                for (std::size_t r = 0; r < rows.size(); ++r) {
                  auto dst = target->grad.row(static_cast<std::size_t>(rows[r]));
                  const auto src = gr.row(r);
                  for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                }
              });
}

template <typename T>
Var Graph<T>::matmul_t(Var x, Var w) {
  const auto& xv = node(x).value;
  const auto& wv = node(w).value;
  const std::size_t b = xv.rows(), n = xv.cols(), m = wv.rows();
  if (wv.cols() != n) {
    throw DimensionError("matmul_t: " + dims(b, n) + " against weight " + dims(m, wv.cols()));
  }
  Tensor<T> out({b, m});
  for (std::size_t r = 0; r < b; ++r) {
    const T* xr = xv.data() + r * n;
    T* orow = out.data() + r * m;
    for (std::size_t i = 0; i < m; ++i) {
      const T* wr = wv.data() + i * n;
      T acc = 0;
      for (std::size_t j = 0; j < n; ++j) acc += wr[j] * xr[j];
      orow[i] = acc;
    }
  }
  const bool rg = node(x).requires_grad || node(w).requires_grad;
  return push(std::move(out), rg, [x, w, b, n, m](Graph& g, std::uint32_t self) {
    const Tensor<T>& dy = g.nodes_[self].grad;
    if (g.nodes_[x.id].requires_grad) {
      const auto& wv = g.nodes_[w.id].value;
      Tensor<T>& dx = g.grad_of(x.id);
      for (std::size_t r = 0; r < b; ++r) {
        const T* dyr = dy.data() + r * m;
        T* dxr = dx.data() + r * n;
        for (std::size_t i = 0; i < m; ++i) {
          const T gi = dyr[i];
          if (gi == T(0)) continue;
          const T* wr = wv.data() + i * n;
          for (std::size_t j = 0; j < n; ++j) dxr[j] += gi * wr[j];
        }
      }
    }
    if (g.nodes_[w.id].requires_grad) {
      const auto& xv = g.nodes_[x.id].value;
      Tensor<T>& dw = g.grad_of(w.id);
      for (std::size_t r = 0; r < b; ++r) {
        const T* dyr = dy.data() + r * m;
        const T* xr = xv.data() + r * n;
        for (std::size_t i = 0; i < m; ++i) {
          const T gi = dyr[i];
          if (gi == T(0)) continue;
          T* dwr = dw.data() + i * n;
          for (std::size_t j = 0; j < n; ++j) dwr[j] += gi * xr[j];
        }
      }
    }
  });
}

template <typename T>
Var Graph<T>::add(Var a, Var b) {
  check_rows_match(a, b, "add");
  Tensor<T> out = node(a).value;
  add_into(out, node(b).value);
  const bool rg = node(a).requires_grad || node(b).requires_grad;
  return push(std::move(out), rg, [a, b](Graph& g, std::uint32_t self) {
    const auto& dy = g.nodes_[self].grad;
    if (g.nodes_[a.id].requires_grad) add_into(g.grad_of(a.id), dy);
    if (g.nodes_[b.id].requires_grad) add_into(g.grad_of(b.id), dy);
  });
}

template <typename T>
Var Graph<T>::sub(Var a, Var b) {
  check_rows_match(a, b, "sub");
  Tensor<T> out = node(a).value;
  auto o = out.values();
  auto bv = node(b).value.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  const bool rg = node(a).requires_grad || node(b).requires_grad;
  return push(std::move(out), rg, [a, b](Graph& g, std::uint32_t self) {
    const auto& dy = g.nodes_[self].grad;
    if (g.nodes_[a.id].requires_grad) add_into(g.grad_of(a.id), dy);
    if (g.nodes_[b.id].requires_grad) {
      auto d = g.grad_of(b.id).values();
      auto s = dy.values();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= s[i];
    }
  });
}

template <typename T>
Var Graph<T>::mul(Var a, Var b) {
  check_rows_match(a, b, "mul");
  Tensor<T> out = node(a).value;
  auto o = out.values();
  auto bv = node(b).value.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  const bool rg = node(a).requires_grad || node(b).requires_grad;
  return push(std::move(out), rg, [a, b](Graph& g, std::uint32_t self) {
    auto dy = g.nodes_[self].grad.values();
    if (g.nodes_[a.id].requires_grad) {
      auto d = g.grad_of(a.id).values();
      auto other = g.nodes_[b.id].value.values();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * other[i];
    }
    if (g.nodes_[b.id].requires_grad) {
      auto d = g.grad_of(b.id).values();
      auto other = g.nodes_[a.id].value.values();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * other[i];
    }
  });
}

template <typename T>
Var Graph<T>::add_row(Var x, Var row) {
  const auto& xv = node(x).value;
  const auto& rv = node(row).value;
  if (rv.rows() != 1 || rv.cols() != xv.cols()) {
    throw DimensionError("add_row: " + dims(xv.rows(), xv.cols()) + " with row " +
                         dims(rv.rows(), rv.cols()));
  }
  Tensor<T> out = xv;
  const std::size_t b = xv.rows(), m = xv.cols();
  for (std::size_t r = 0; r < b; ++r) {
    T* o = out.data() + r * m;
    for (std::size_t j = 0; j < m; ++j) o[j] += rv[j];
  }
  const bool rg = node(x).requires_grad || node(row).requires_grad;
  return push(std::move(out), rg, [x, row, b, m](Graph& g, std::uint32_t self) {
    const auto& dy = g.nodes_[self].grad;
    if (g.nodes_[x.id].requires_grad) add_into(g.grad_of(x.id), dy);
    if (g.nodes_[row.id].requires_grad) {
      Tensor<T>& dr = g.grad_of(row.id);
      for (std::size_t r = 0; r < b; ++r) {
        const T* d = dy.data() + r * m;
        for (std::size_t j = 0; j < m; ++j) dr[j] += d[j];
      }
    }
  });
}

template <typename T>
Var Graph<T>::mul_row(Var x, Var row) {
  const auto& xv = node(x).value;
  const auto& rv = node(row).value;
  if (rv.rows() != 1 || rv.cols() != xv.cols()) {
    throw DimensionError("mul_row: " + dims(xv.rows(), xv.cols()) + " with row " +
                         dims(rv.rows(), rv.cols()));
  }
  Tensor<T> out = xv;
  const std::size_t b = xv.rows(), m = xv.cols();
  for (std::size_t r = 0; r < b; ++r) {
    T* o = out.data() + r * m;
    for (std::size_t j = 0; j < m; ++j) o[j] *= rv[j];
  }
  const bool rg = node(x).requires_grad || node(row).requires_grad;
  return push(std::move(out), rg, [x, row, b, m](Graph& g, std::uint32_t self) {
    const auto& dy = g.nodes_[self].grad;
    if (g.nodes_[x.id].requires_grad) {
      const auto& rv = g.nodes_[row.id].value;
      Tensor<T>& dx = g.grad_of(x.id);
      for (std::size_t r = 0; r < b; ++r) {
        for (std::size_t j = 0; j < m; ++j) dx[r * m + j] += dy[r * m + j] * rv[j];
      }
    }
    if (g.nodes_[row.id].requires_grad) {
      const auto& xv = g.nodes_[x.id].value;
      Tensor<T>& dr = g.grad_of(row.id);
      for (std::size_t r = 0; r < b; ++r) {
        for (std::size_t j = 0; j < m; ++j) dr[j] += dy[r * m + j] * xv[r * m + j];
      }
    }
  });
}

template <typename T>
template <typename F, typename DF>
Var Graph<T>::unary(Var x, F f, DF df) {
  Tensor<T> out = node(x).value;
  for (T& v : out.values()) v = f(v);
  return push(std::move(out), node(x).requires_grad, [x, df](Graph& g, std::uint32_t self) {
    auto dy = g.nodes_[self].grad.values();
    auto y = g.nodes_[self].value.values();
    auto xin = g.nodes_[x.id].value.values();
    auto d = g.grad_of(x.id).values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * df(xin[i], y[i]);
  });
}

template <typename T>
Var Graph<T>::sigmoid(Var x) {
  return unary(x, [](T v) { return mmt::sigmoid(v); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var Graph<T>::tanh(Var x) {
  return unary(x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var Graph<T>::relu(Var x) {
  return unary(
      x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var Graph<T>::exp(Var x) {
  return unary(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Var Graph<T>::log(Var x, T eps) {
  return unary(
      x, [eps](T v) { return std::log(v + eps); }, [eps](T v, T) { return T(1) / (v + eps); });
}

template <typename T>
Var Graph<T>::square(Var x) {
  return unary(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Var Graph<T>::scale(Var x, T factor) {
  return unary(x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Var Graph<T>::add_scalar(Var x, T c) {
  return unary(x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <typename T>
Var Graph<T>::row_sum(Var x) {
  const auto& xv = node(x).value;
  const std::size_t b = xv.rows(), m = xv.cols();
  Tensor<T> out({b, 1});
  for (std::size_t r = 0; r < b; ++r) {
    T acc = 0;
    for (std::size_t j = 0; j < m; ++j) acc += xv[r * m + j];
    out[r] = acc;
  }
  return push(std::move(out), node(x).requires_grad, [x, b, m](Graph& g, std::uint32_t self) {
    const auto& dy = g.nodes_[self].grad;
    Tensor<T>& dx = g.grad_of(x.id);
    for (std::size_t r = 0; r < b; ++r) {
      for (std::size_t j = 0; j < m; ++j) dx[r * m + j] += dy[r];
    }
  });
}

template <typename T>
Var Graph<T>::row_dot(Var a, Var b) {
  check_rows_match(a, b, "row_dot");
  const auto& av = node(a).value;
  const auto& bv = node(b).value;
  const std::size_t n = av.rows(), m = av.cols();
  Tensor<T> out({n, 1});
  for (std::size_t r = 0; r < n; ++r) {
    T acc = 0;
    for (std::size_t j = 0; j < m; ++j) acc += av[r * m + j] * bv[r * m + j];
    out[r] = acc;
  }
  const bool rg = node(a).requires_grad || node(b).requires_grad;
  return push(std::move(out), rg, [a, b, n, m](Graph& g, std::uint32_t self) {
    const auto& dy = g.nodes_[self].grad;
    if (g.nodes_[a.id].requires_grad) {
      const auto& bv = g.nodes_[b.id].value;
      Tensor<T>& da = g.grad_of(a.id);
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < m; ++j) da[r * m + j] += dy[r] * bv[r * m + j];
      }
    }
    if (g.nodes_[b.id].requires_grad) {
      const auto& av = g.nodes_[a.id].value;
      Tensor<T>& db = g.grad_of(b.id);
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < m; ++j) db[r * m + j] += dy[r] * av[r * m + j];
      }
    }
  });
}

template <typename T>
Var Graph<T>::row_norm(Var x) {
  const auto& xv = node(x).value;
  const std::size_t b = xv.rows(), m = xv.cols();
  Tensor<T> out({b, 1});
  for (std::size_t r = 0; r < b; ++r) {
    T acc = 0;
    for (std::size_t j = 0; j < m; ++j) acc += xv[r * m + j] * xv[r * m + j];
    out[r] = std::sqrt(acc);
  }
  return push(std::move(out), node(x).requires_grad, [x, b, m](Graph& g, std::uint32_t self) {
    const auto& dy = g.nodes_[self].grad;
    const auto& norms = g.nodes_[self].value;
    const auto& xv = g.nodes_[x.id].value;
    Tensor<T>& dx = g.grad_of(x.id);
    for (std::size_t r = 0; r < b; ++r) {
      if (norms[r] == T(0)) continue;
      const T k = dy[r] / norms[r];
      for (std::size_t j = 0; j < m; ++j) dx[r * m + j] += k * xv[r * m + j];
    }
  });
}

template <typename T>
Var Graph<T>::sum(Var x) {
  T acc = 0;
  for (T v : node(x).value.values()) acc += v;
  return push(Tensor<T>({1, 1}, acc), node(x).requires_grad, [x](Graph& g, std::uint32_t self) {
    const T dy = g.nodes_[self].grad[0];
    for (T& d : g.grad_of(x.id).values()) d += dy;
  });
}

template <typename T>
Var Graph<T>::mean(Var x) {
  const std::size_t n = node(x).value.size();
  if (n == 0) throw DimensionError("mean of empty node");
  return scale(sum(x), T(1) / static_cast<T>(n));
}

template <typename T>
Var Graph<T>::slice_cols(Var x, std::size_t begin, std::size_t end) {
  const auto& xv = node(x).value;
  const std::size_t b = xv.rows(), m = xv.cols();
  if (begin > end || end > m) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") of " + dims(b, m));
  }
  const std::size_t w = end - begin;
  Tensor<T> out({b, w});
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t j = 0; j < w; ++j) out[r * w + j] = xv[r * m + begin + j];
  }
  return push(std::move(out), node(x).requires_grad,
              [x, b, m, w, begin](Graph& g, std::uint32_t self) {
                const auto& dy = g.nodes_[self].grad;
                Tensor<T>& dx = g.grad_of(x.id);
                for (std::size_t r = 0; r < b; ++r) {
                  for (std::size_t j = 0; j < w; ++j) dx[r * m + begin + j] += dy[r * w + j];
                }
              });
}

template <typename T>
Var Graph<T>::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  const std::size_t b = node(parts[0]).value.rows();
  std::size_t total = 0;
  bool rg = false;
  for (Var p : parts) {
    if (node(p).value.rows() != b) throw DimensionError("concat_cols: row count mismatch");
    total += node(p).value.cols();
    rg = rg || node(p).requires_grad;
  }
  Tensor<T> out({b, total});
  std::size_t off = 0;
  for (Var p : parts) {
    const auto& pv = node(p).value;
    const std::size_t w = pv.cols();
    for (std::size_t r = 0; r < b; ++r) {
      for (std::size_t j = 0; j < w; ++j) out[r * total + off + j] = pv[r * w + j];
    }
    off += w;
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return push(std::move(out), rg, [ps, b, total](Graph& g, std::uint32_t self) {
    const auto& dy = g.nodes_[self].grad;
    std::size_t off = 0;
    for (Var p : ps) {
      const std::size_t w = g.nodes_[p.id].value.cols();
      if (g.nodes_[p.id].requires_grad) {
        Tensor<T>& dp = g.grad_of(p.id);
        for (std::size_t r = 0; r < b; ++r) {
          for (std::size_t j = 0; j < w; ++j) dp[r * w + j] += dy[r * total + off + j];
        }
      }
      off += w;
    }
  });
}

template <typename T>
Var Graph<T>::slice_rows(Var x, std::size_t begin, std::size_t end) {
  const auto& xv = node(x).value;
  const std::size_t m = xv.cols();
  if (begin > end || end > xv.rows()) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") of " + dims(xv.rows(), m));
  }
  std::vector<T> v(xv.data() + begin * m, xv.data() + end * m);
  return push(Tensor<T>({end - begin, m}, std::move(v)), node(x).requires_grad,
              [x, begin, m](Graph& g, std::uint32_t self) {
                const auto& dy = g.nodes_[self].grad;
                Tensor<T>& dx = g.grad_of(x.id);
                for (std::size_t i = 0; i < dy.size(); ++i) dx[begin * m + i] += dy[i];
              });
}

template <typename T>
Var Graph<T>::dropout(Var x, double rate, std::mt19937_64& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  const auto& xv = node(x).value;
  Tensor<T> mask(xv.shape());
  std::bernoulli_distribution keep(1.0 - rate);
  const T k = T(1) / static_cast<T>(1.0 - rate);
  for (T& m : mask.values()) m = keep(rng) ? k : T(0);
  Var mv = constant(std::move(mask));
  return mul(x, mv);
}

template <typename T>
void Graph<T>::backward(Var loss) {
  if (backward_done_) throw StateError("backward() called twice on the same graph");
  const auto& lv = node(loss).value;
  if (lv.size() != 1) throw DimensionError("backward() needs a scalar loss, got " + shape_string(lv.shape()));
  backward_done_ = true;
  if (!node(loss).requires_grad) return;
  grad_of(loss.id)[0] = T(1);
  for (std::uint32_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() != n.value.size()) continue;
    n.backward(*this, i);
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace mmt
