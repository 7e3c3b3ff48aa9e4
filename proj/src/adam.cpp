// SPDX-License-Identifier: Apache-2.0
#include "mmt/adam.hpp"

#include <cmath>

#include "mmt/error.hpp"

namespace mmt {

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("adam: lr must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ConfigError("adam: betas must lie in (0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("adam: eps must be positive");
}

namespace {

template <typename T>
void update(Parameter<T>& p, const AdamConfig& cfg, double lr) {
  p.adam_steps += 1;
  const double t = static_cast<double>(p.adam_steps);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  auto w = p.value.values();
  auto g = p.grad.values();
  auto m = p.adam_m.values();
  auto v = p.adam_v.values();
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double gi = g[i];
    const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
    const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double mhat = mi / c1;
    const double vhat = vi / c2;
    w[i] = static_cast<T>(w[i] - lr * mhat / (std::sqrt(vhat) + cfg.eps));
  }
}

}  // namespace

template <typename T>
void adam_step(ParameterStore<T>& store, AdamConfig& cfg, const LearningRatePolicy& policy) {
  cfg.validate();
  for (auto& [name, p] : store) {
    if (p.trainable) {
      if (auto lr = policy(name)) update(p, cfg, *lr);
    }
    p.zero_grad();
  }
  cfg.step_count += 1;
}

template <typename T>
void adam_step(ParameterStore<T>& store, AdamConfig& cfg, std::optional<double> lr_override) {
  const double lr = lr_override.value_or(cfg.lr);
  adam_step(store, cfg, LearningRatePolicy([lr](const std::string&) { return lr; }));
}

template void adam_step(ParameterStore<float>&, AdamConfig&, std::optional<double>);
template void adam_step(ParameterStore<double>&, AdamConfig&, std::optional<double>);
template void adam_step(ParameterStore<float>&, AdamConfig&, const LearningRatePolicy&);
template void adam_step(ParameterStore<double>&, AdamConfig&, const LearningRatePolicy&);

}  // namespace mmt
