// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mmt/model.hpp"

namespace mmt {

struct GradCheckConfig {
  double h = 1e-4;
  double tolerance = 1e-4;
  std::size_t embedding_dim = 8;
  std::size_t context_width = 6;
  std::size_t batch = 6;
  std::uint64_t seed = 1;
};

struct GradCheckCase {
  std::string name;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
  std::string worst;  // "param[index]" of the largest error
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckCase> cases;
  double seconds = 0.0;
  bool passed() const;
};

/// |a - n| / max(|a|, |n|, 1e-3).
double relative_error(double analytic, double numeric);

using LossBuilder = std::function<Var(Graph<double>&)>;

/// Central differences on every coordinate of every trainable parameter
/// selected by `select`, against one backward pass of `loss`. `loss` must be
/// deterministic.
GradCheckCase check_gradients(const std::string& name, ParameterStore<double>& store, const LossBuilder& loss,
                              const std::function<bool(const std::string&)>& select, double h, double tolerance);

/// The full suite on a toy domain: explicit and implicit losses with the
/// multimodal residual, dropout and attenuation switched on, the FMT tower,
/// DRR with nonzero adapters, both regularizer objectives and the sampled KL.
GradCheckReport run_gradcheck(const GradCheckConfig& cfg = {});

}  // namespace mmt
