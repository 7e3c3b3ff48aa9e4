// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "mmt/parameter.hpp"
#include "mmt/tensor.hpp"

namespace mmt {

/// Handle to a node of a Graph.
struct Var {
  std::uint32_t id = 0;
};

/// Reverse-mode tape over batch-major matrices.
///
/// Every node value is a rank-2 tensor; rank-1 parameters enter as a single
/// row. A graph is built for one forward pass and consumed by one call to
/// backward(), which accumulates into Parameter::grad of every trainable
/// parameter that was reached. Nodes that cannot reach a trainable parameter
/// carry no gradient.
template <typename T>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor<T> value);
  Var param(Parameter<T>& p);
  /// Rows `ids` of a [N, d] table; gradient scatters back into those rows only.
  Var gather(Parameter<T>& table, std::span<const int> ids);

  /// x [B, n] times w [m, n] transposed -> [B, m].
  Var matmul_t(Var x, Var w);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  /// Broadcast a [1, m] row over the rows of x [B, m].
  Var add_row(Var x, Var row);
  Var mul_row(Var x, Var row);

  Var sigmoid(Var x);
  Var tanh(Var x);
  Var relu(Var x);
  Var exp(Var x);
  Var log(Var x, T eps = T(0));
  Var square(Var x);
  Var scale(Var x, T factor);
  Var add_scalar(Var x, T c);

  Var row_sum(Var x);
  Var row_dot(Var a, Var b);
  /// Euclidean norm of each row -> [B, 1]; gradient at a zero row is zero.
  Var row_norm(Var x);
  Var sum(Var x);
  Var mean(Var x);

  Var slice_cols(Var x, std::size_t begin, std::size_t end);
  Var concat_cols(std::span<const Var> parts);
  Var slice_rows(Var x, std::size_t begin, std::size_t end);

  /// Inverted dropout. Identity (same node) when !training or rate == 0.
  Var dropout(Var x, double rate, std::mt19937_64& rng, bool training);

  const Tensor<T>& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  /// Gradient of the last backward() with respect to node `v`; zero if unreached.
  Tensor<T> grad(Var v) const;
  T scalar(Var v) const;
  std::size_t node_count() const { return nodes_.size(); }

  /// Populates parameter gradients from a [1, 1] loss node.
  void backward(Var loss);

 private:
  using BackwardFn = std::function<void(Graph&, std::uint32_t)>;

  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Tensor<T> value, bool requires_grad, BackwardFn fn);
  Tensor<T>& grad_of(std::uint32_t id);
  const Node& node(Var v) const { return nodes_[v.id]; }
  template <typename F, typename DF>
  Var unary(Var x, F f, DF df);
  void check_rows_match(Var a, Var b, const char* what) const;

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace mmt
