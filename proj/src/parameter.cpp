// SPDX-License-Identifier: Apache-2.0
#include "mmt/parameter.hpp"

#include "mmt/error.hpp"

namespace mmt {

template <typename T>
Parameter<T>::Parameter(std::string n, Tensor<T> v)
    : name(std::move(n)),
      value(std::move(v)),
      grad(value.shape()),
      adam_m(value.shape()),
      adam_v(value.shape()) {}

template <typename T>
void Parameter<T>::reset_optimizer_state() {
  adam_m.fill(T(0));
  adam_v.fill(T(0));
  adam_steps = 0;
}

template <typename T>
Parameter<T>& ParameterStore<T>::add(const std::string& name, Tensor<T> value) {
  auto [it, inserted] = params_.try_emplace(name, name, std::move(value));
  if (!inserted) throw ConfigError("duplicate parameter name: " + name);
  return it->second;
}

template <typename T>
Parameter<T>& ParameterStore<T>::at(std::string_view name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + std::string(name));
  return it->second;
}

template <typename T>
const Parameter<T>& ParameterStore<T>::at(std::string_view name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + std::string(name));
  return it->second;
}

template <typename T>
std::vector<std::string> ParameterStore<T>::names_with_prefix(std::string_view prefix) const {
  std::vector<std::string> out;
  for (auto it = params_.lower_bound(prefix); it != params_.end() && has_prefix(it->first, prefix);
       ++it) {
    out.push_back(it->first);
  }
  return out;
}

template <typename T>
std::size_t ParameterStore<T>::erase_prefix(std::string_view prefix) {
  std::size_t n = 0;
  for (auto it = params_.lower_bound(prefix); it != params_.end() && has_prefix(it->first, prefix);) {
    it = params_.erase(it);
    ++n;
  }
  return n;
}

template <typename T>
std::size_t ParameterStore<T>::scalar_count(std::string_view prefix) const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) {
    if (has_prefix(name, prefix)) n += p.value.size();
  }
  return n;
}

template <typename T>
void ParameterStore<T>::set_trainable(const std::function<bool(const std::string&)>& pred) {
  for (auto& [name, p] : params_) p.trainable = pred(name);
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

template struct Parameter<float>;
template struct Parameter<double>;
template class ParameterStore<float>;
template class ParameterStore<double>;

}  // namespace mmt
