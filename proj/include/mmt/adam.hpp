// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "mmt/parameter.hpp"

namespace mmt {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step_count = 0;

  void validate() const;
};

/// Per-parameter learning rate; std::nullopt leaves the parameter untouched.
using LearningRatePolicy = std::function<std::optional<double>(const std::string& name)>;

/// One bias-corrected ADAM update of every trainable parameter, then zeroes
/// all gradients. `lr_override` replaces cfg.lr for this call only.
template <typename T>
void adam_step(ParameterStore<T>& store, AdamConfig& cfg,
               std::optional<double> lr_override = std::nullopt);

/// Same update with a learning rate chosen per parameter.
template <typename T>
void adam_step(ParameterStore<T>& store, AdamConfig& cfg, const LearningRatePolicy& policy);

}  // namespace mmt
