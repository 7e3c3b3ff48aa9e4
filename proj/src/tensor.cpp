// SPDX-License-Identifier: Apache-2.0
#include "mmt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "mmt/error.hpp"

namespace mmt {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void check_rank(const std::vector<std::size_t>& shape) {
  if (shape.empty() || shape.size() > 2) {
    throw DimensionError("tensor rank must be 1 or 2, got shape " + shape_string(shape));
  }
}

}  // namespace

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename T>
Tensor<T>::Tensor(std::vector<std::size_t> shape, T fill)
    : shape_(std::move(shape)) {
  check_rank(shape_);
  values_.assign(shape_product(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(std::vector<std::size_t> shape, std::vector<T> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  check_rank(shape_);
  if (shape_product(shape_) != values_.size()) {
    throw DimensionError("shape " + shape_string(shape_) + " does not hold " +
                         std::to_string(values_.size()) + " values");
  }
}

template <typename T>
Tensor<T> Tensor<T>::vector(std::initializer_list<T> values) {
  return Tensor({values.size()}, std::vector<T>(values));
}

template <typename T>
Tensor<T> Tensor<T>::matrix(std::initializer_list<std::initializer_list<T>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<T> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(values));
}

template <typename T>
std::size_t Tensor<T>::rows() const {
  return shape_.size() == 2 ? shape_[0] : 1;
}

template <typename T>
std::size_t Tensor<T>::cols() const {
  return shape_.empty() ? 0 : shape_.back();
}

template <typename T>
void Tensor<T>::fill(T v) {
  std::fill(values_.begin(), values_.end(), v);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
T sigmoid(T x) {
  // Split on sign so exp never overflows.
  if (x >= T(0)) {
    const T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
void require_finite(const Tensor<T>& t, const char* what) {
  if (!t.all_finite()) throw NumericError(std::string("non-finite values in ") + what);
}

template <typename T>
Tensor<T> matvec(const Tensor<T>& w, const Tensor<T>& x) {
  if (w.rank() != 2 || x.rank() != 1 || w.cols() != x.size()) {
    throw DimensionError("matvec: cannot multiply " + shape_string(w.shape()) + " by " +
                         shape_string(x.shape()));
  }
  Tensor<T> y({w.rows()});
  for (std::size_t i = 0; i < w.rows(); ++i) {
    T acc = 0;
    const auto row = w.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
  require_finite(y, "matvec");
  return y;
}

template <typename T>
Tensor<T> elementwise(ElementwiseOp op, const Tensor<T>& a, const Tensor<T>* b) {
  const bool binary = op == ElementwiseOp::add || op == ElementwiseOp::mul;
  if (binary && (b == nullptr || !a.same_shape(*b))) {
    throw DimensionError("elementwise: binary op needs equal shapes, got " +
                         shape_string(a.shape()) + " and " +
                         (b ? shape_string(b->shape()) : std::string("nothing")));
  }
  Tensor<T> out = a;
  auto v = out.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    switch (op) {
      case ElementwiseOp::add: v[i] += (*b)[i]; break;
      case ElementwiseOp::mul: v[i] *= (*b)[i]; break;
      case ElementwiseOp::sigmoid: v[i] = sigmoid(v[i]); break;
      case ElementwiseOp::tanh: v[i] = std::tanh(v[i]); break;
      case ElementwiseOp::relu: v[i] = v[i] > T(0) ? v[i] : T(0); break;
    }
  }
  require_finite(out, "elementwise");
  return out;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, std::mt19937_64& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  Tensor<T> out = x;
  std::bernoulli_distribution keep(1.0 - rate);
  const T k = T(1) / static_cast<T>(1.0 - rate);
  for (T& v : out.values()) v = keep(rng) ? v * k : T(0);
  return out;
}

template class Tensor<float>;
template class Tensor<double>;
template float sigmoid(float);
template double sigmoid(double);
template void require_finite(const Tensor<float>&, const char*);
template void require_finite(const Tensor<double>&, const char*);
template Tensor<float> matvec(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> matvec(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> elementwise(ElementwiseOp, const Tensor<float>&, const Tensor<float>*);
template Tensor<double> elementwise(ElementwiseOp, const Tensor<double>&, const Tensor<double>*);
template Tensor<float> dropout(const Tensor<float>&, double, std::mt19937_64&, bool);
template Tensor<double> dropout(const Tensor<double>&, double, std::mt19937_64&, bool);

}  // namespace mmt
