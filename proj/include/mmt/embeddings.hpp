// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <span>
#include <string>

#include "mmt/graph.hpp"
#include "mmt/model_config.hpp"

namespace mmt::m2 {

enum class EntityKind { User, Item };

std::string prefix(const std::string& domain);
std::string table(const std::string& domain, EntityKind kind);
/// Explicit mode only: per-entity biases stored as [N, 1], global bias as [1].
std::string bias(const std::string& domain, EntityKind kind);
std::string global_bias(const std::string& domain);

/// Tables ~ N(0, 0.1); explicit mode adds zero biases and a global bias set to
/// `mean_rating`.
template <typename T>
void init(ParameterStore<T>& store, const std::string& domain, std::size_t n_users,
          std::size_t n_items, std::size_t dim, Feedback feedback, double mean_rating,
          std::mt19937_64& rng);

/// Rows of the user or item table; IndexError for an unknown id.
template <typename T>
Var lookup(Graph<T>& g, ParameterStore<T>& store, const std::string& domain, EntityKind kind,
           std::span<const int> ids);

template <typename T>
Var lookup_bias(Graph<T>& g, ParameterStore<T>& store, const std::string& domain, EntityKind kind,
                std::span<const int> ids);

}  // namespace mmt::m2
