// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>

#include "mmt/graph.hpp"

namespace mmt {

/// Points where a target domain may insert a residual adapter.
enum class Site { C2, GatedUser, GatedItem };

inline constexpr std::array<Site, 3> kSites{Site::C2, Site::GatedUser, Site::GatedItem};

std::string to_string(Site s);
Site site_from_string(const std::string& s);

std::string adapter_prefix(const std::string& domain);
std::string adapter_weight(const std::string& domain, Site s);
std::string adapter_bias(const std::string& domain, Site s);

/// x + tanh(x W^T + b).
template <typename T>
Var residual_forward(Graph<T>& g, Var x, Var w, Var b);

template <typename T>
Tensor<T> residual_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

}  // namespace mmt
