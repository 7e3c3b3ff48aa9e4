// SPDX-License-Identifier: Apache-2.0
#include "mmt/embeddings.hpp"

#include "mmt/error.hpp"

namespace mmt::m2 {

std::string prefix(const std::string& domain) { return "m2." + domain + "."; }

std::string table(const std::string& domain, EntityKind kind) {
  return prefix(domain) + (kind == EntityKind::User ? "user" : "item");
}

std::string bias(const std::string& domain, EntityKind kind) {
  return prefix(domain) + (kind == EntityKind::User ? "user_bias" : "item_bias");
}

std::string global_bias(const std::string& domain) { return prefix(domain) + "global_bias"; }

template <typename T>
void init(ParameterStore<T>& store, const std::string& domain, std::size_t n_users,
          std::size_t n_items, std::size_t dim, Feedback feedback, double mean_rating,
          std::mt19937_64& rng) {
  if (n_users == 0 || n_items == 0 || dim == 0) {
    throw ConfigError("embeddings for '" + domain + "' need positive sizes");
  }
  std::normal_distribution<double> normal(0.0, 0.1);
  auto draw = [&](std::size_t n) {
    Tensor<T> t({n, dim});
    for (auto& x : t.values()) x = static_cast<T>(normal(rng));
    return t;
  };
  store.add(table(domain, EntityKind::User), draw(n_users));
  store.add(table(domain, EntityKind::Item), draw(n_items));
  if (feedback == Feedback::Explicit) {
    store.add(bias(domain, EntityKind::User), Tensor<T>({n_users, 1}));
    store.add(bias(domain, EntityKind::Item), Tensor<T>({n_items, 1}));
    store.add(global_bias(domain), Tensor<T>({1}, static_cast<T>(mean_rating)));
  }
}

template <typename T>
Var lookup(Graph<T>& g, ParameterStore<T>& store, const std::string& domain, EntityKind kind,
           std::span<const int> ids) {
  const auto name = table(domain, kind);
  if (!store.contains(name)) throw StateError("no embeddings for domain '" + domain + "'");
  return g.gather(store.at(name), ids);
}

template <typename T>
Var lookup_bias(Graph<T>& g, ParameterStore<T>& store, const std::string& domain, EntityKind kind,
                std::span<const int> ids) {
  const auto name = bias(domain, kind);
  if (!store.contains(name)) throw StateError("no bias terms for domain '" + domain + "'");
  return g.gather(store.at(name), ids);
}

#define MMT_INSTANTIATE(T)                                                                       \
  template void init<T>(ParameterStore<T>&, const std::string&, std::size_t, std::size_t,        \
                        std::size_t, Feedback, double, std::mt19937_64&);                        \
  template Var lookup<T>(Graph<T>&, ParameterStore<T>&, const std::string&, EntityKind,          \
                         std::span<const int>);                                                  \
  template Var lookup_bias<T>(Graph<T>&, ParameterStore<T>&, const std::string&, EntityKind,     \
                              std::span<const int>);
MMT_INSTANTIATE(float)
MMT_INSTANTIATE(double)
#undef MMT_INSTANTIATE

}  // namespace mmt::m2
