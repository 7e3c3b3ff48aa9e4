// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mmt/tensor.hpp"

namespace mmt {

/// A named learnable tensor with its gradient buffer and ADAM moments.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> adam_m;
  Tensor<T> adam_v;
  std::uint64_t adam_steps = 0;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v);

  void zero_grad() { grad.fill(T(0)); }
  void reset_optimizer_state();
};

/// Named parameters ordered lexicographically by name.
///
/// Names are dotted paths; the first component groups parameters by module
/// ("m1.", "m2.<domain>.", "m3.", "m4.", "adapter.<domain>.", "reg.<site>.").
template <typename T>
class ParameterStore {
 public:
  using Map = std::map<std::string, Parameter<T>, std::less<>>;

  Parameter<T>& add(const std::string& name, Tensor<T> value);
  bool contains(std::string_view name) const { return params_.find(name) != params_.end(); }
  Parameter<T>& at(std::string_view name);
  const Parameter<T>& at(std::string_view name) const;

  std::vector<std::string> names_with_prefix(std::string_view prefix) const;
  std::size_t erase_prefix(std::string_view prefix);
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count(std::string_view prefix = "") const;

  /// Marks every parameter trainable iff `pred(name)` holds.
  void set_trainable(const std::function<bool(const std::string&)>& pred);
  void zero_grad();

  typename Map::iterator begin() { return params_.begin(); }
  typename Map::iterator end() { return params_.end(); }
  typename Map::const_iterator begin() const { return params_.begin(); }
  typename Map::const_iterator end() const { return params_.end(); }

 private:
  Map params_;
};

inline bool has_prefix(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

}  // namespace mmt
