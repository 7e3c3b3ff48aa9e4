// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mmt/data.hpp"

namespace mmt {

/// One multiplicative term of the hidden context rule: coef * prod c[features].
struct Monomial {
  std::vector<std::size_t> features;
  double coef = 0.0;
  bool operator==(const Monomial&) const = default;
};

struct ContextRule {
  int order = 2;
  std::vector<Monomial> monomials;

  double operator()(const std::vector<float>& c) const;
  bool operator==(const ContextRule&) const = default;
};

/// Generator settings. Index 0 of the per-domain vectors is the dense source;
/// the remaining entries are sparse targets.
struct SynthConfig {
  std::size_t n_domains = 4;
  std::vector<std::size_t> users_per_domain{1000, 150, 150, 150};
  std::vector<std::size_t> items_per_domain{300, 80, 80, 80};
  std::vector<std::size_t> interactions_per_domain{20000, 1500, 1500, 1500};

  std::size_t context_width = 12;
  std::size_t i_end = 4;
  std::size_t h_end = 8;

  int order = 2;
  std::size_t n_monomials = 12;
  double coef_scale = 1.0;
  /// Monomials have degree exactly `order` when set, else degree in [1, order].
  bool exact_order = false;

  std::size_t trait_dim = 4;
  double trait_scale = 0.6;

  Feedback feedback = Feedback::Explicit;
  double global_rating = 3.0;
  double rating_min = 1.0;
  double rating_max = 5.0;
  double rating_noise = 0.25;
  /// Sharpness of item choice in implicit mode.
  double implicit_temperature = 2.0;

  /// Fraction of contexts drawn near a few shared prototypes; the rest are
  /// uniform. Larger values make most contexts common and a few novel.
  double novelty_skew = 0.0;
  std::size_t n_prototypes = 6;
  double prototype_jitter = 0.05;
  /// When > 0, non-prototype contexts are binary with this activation rate.
  double active_rate = 0.0;

  std::uint64_t seed = 1;

  void validate() const;
};

struct SynthDomainTruth {
  std::string domain_id;
  std::size_t trait_dim = 0;
  std::vector<double> user_traits;  // n_users x trait_dim
  std::vector<double> item_traits;  // n_items x trait_dim
  /// Implicit mode: how strongly each item's propensity follows the rule.
  std::vector<double> item_context_affinity;
  ContextRule rule;
  double global_rating = 0.0;

  double user_item_affinity(int user, int item) const;
};

struct SynthOutput {
  std::vector<DomainDataset> datasets;
  std::vector<SynthDomainTruth> truth;
};

/// Builds `n_domains` disjoint domains that share one hidden context rule.
/// Explicit ratings are clip(global + u.v + rule(c) + noise); implicit
/// interactions pick items with probability proportional to
/// exp(temperature * (u.v + affinity_v * rule(c))).
SynthOutput synth_generate(const SynthConfig& cfg);

std::string serialize_rule(const ContextRule& rule);
ContextRule parse_rule(const std::string& json_text);

SynthConfig synth_config_from_json(const std::string& json_text);

/// Writes <dir>/<domain_id>/{manifest.json, interactions.jsonl} per domain
/// plus <dir>/rule.json.
void write_synth_output(const SynthOutput& out, const std::filesystem::path& dir);

}  // namespace mmt
