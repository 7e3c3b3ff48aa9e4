// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mmt {

/// Dense row-major tensor of rank 1 or 2.
///
/// Rank-1 tensors behave as a single row when a matrix view is needed, so a
/// bias vector of length n has rows() == 1 and cols() == n.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, T fill = T(0));
  Tensor(std::vector<std::size_t> shape, std::vector<T> values);

  static Tensor vector(std::initializer_list<T> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<T>> rows);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  T* data() { return values_.data(); }
  const T* data() const { return values_.data(); }

  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }
  T& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  std::span<T> row(std::size_t r) { return {values_.data() + r * cols(), cols()}; }
  std::span<const T> row(std::size_t r) const { return {values_.data() + r * cols(), cols()}; }

  void fill(T v);
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  /// Value-converting copy (e.g. float <-> double).
  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(values_.begin(), values_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<T> values_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

/// y = W x for W of shape [m, n] and x of length n.
template <typename T>
Tensor<T> matvec(const Tensor<T>& w, const Tensor<T>& x);

enum class ElementwiseOp { add, mul, sigmoid, tanh, relu };

/// Unary ops ignore `b`; binary ops require equal shapes.
template <typename T>
Tensor<T> elementwise(ElementwiseOp op, const Tensor<T>& a, const Tensor<T>* b = nullptr);

template <typename T>
T sigmoid(T x);

/// Inverted dropout: in training mode each entry survives with probability
/// 1 - rate and is scaled by 1 / (1 - rate); eval mode is the identity.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, std::mt19937_64& rng, bool training);

/// Throws NumericError naming `what` when any value is NaN or infinite.
template <typename T>
void require_finite(const Tensor<T>& t, const char* what);

}  // namespace mmt
