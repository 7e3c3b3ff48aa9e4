// SPDX-License-Identifier: Apache-2.0
#include "mmt/adapter.hpp"

#include "mmt/error.hpp"

namespace mmt {

std::string to_string(Site s) {
  switch (s) {
    case Site::C2: return "c2";
    case Site::GatedUser: return "gated_user";
    case Site::GatedItem: return "gated_item";
  }
  return "?";
}

Site site_from_string(const std::string& s) {
  for (Site site : kSites) {
    if (to_string(site) == s) return site;
  }
  throw ConfigError("unknown adaptation site '" + s + "'");
}

std::string adapter_prefix(const std::string& domain) { return "adapter." + domain + "."; }

std::string adapter_weight(const std::string& domain, Site s) {
  return adapter_prefix(domain) + to_string(s) + ".W";
}

std::string adapter_bias(const std::string& domain, Site s) {
  return adapter_prefix(domain) + to_string(s) + ".b";
}

template <typename T>
Var residual_forward(Graph<T>& g, Var x, Var w, Var b) {
  const auto& xv = g.value(x);
  const auto& wv = g.value(w);
  if (wv.rows() != xv.cols() || wv.cols() != xv.cols() || g.value(b).cols() != xv.cols()) {
    throw DimensionError("residual: x " + shape_string(xv.shape()) + ", W " + shape_string(wv.shape()) +
                         ", b " + shape_string(g.value(b).shape()));
  }
  return g.add(x, g.tanh(g.add_row(g.matmul_t(x, w), b)));
}

template <typename T>
Tensor<T> residual_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  Graph<T> g;
  Tensor<T> v = g.value(residual_forward(g, g.constant(x), g.constant(w), g.constant(b)));
  if (x.rank() == 1) return Tensor<T>({v.size()}, std::vector<T>(v.values().begin(), v.values().end()));
  return v;
}

template Var residual_forward<float>(Graph<float>&, Var, Var, Var);
template Var residual_forward<double>(Graph<double>&, Var, Var, Var);
template Tensor<float> residual_forward<float>(const Tensor<float>&, const Tensor<float>&,
                                               const Tensor<float>&);
template Tensor<double> residual_forward<double>(const Tensor<double>&, const Tensor<double>&,
                                                 const Tensor<double>&);

}  // namespace mmt
