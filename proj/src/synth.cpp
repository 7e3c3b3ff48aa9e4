// SPDX-License-Identifier: Apache-2.0
#include "mmt/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "json.hpp"

#include "mmt/error.hpp"

namespace mmt {

using nlohmann::json;

double ContextRule::operator()(const std::vector<float>& c) const {
  double acc = 0.0;
  for (const auto& m : monomials) {
    double term = m.coef;
    for (std::size_t f : m.features) term *= static_cast<double>(c[f]);
    acc += term;
  }
  return acc;
}

void SynthConfig::validate() const {
  if (n_domains < 1) throw ConfigError("synth: need at least one domain");
  if (users_per_domain.size() != n_domains || items_per_domain.size() != n_domains ||
      interactions_per_domain.size() != n_domains) {
    throw ConfigError("synth: per-domain size lists must have n_domains entries");
  }
  for (std::size_t k = 1; k < n_domains; ++k) {
    if (interactions_per_domain[k] >= interactions_per_domain[0]) {
      throw ConfigError("synth: target domains must be sparser than the source");
    }
  }
  for (std::size_t k = 0; k < n_domains; ++k) {
    if (users_per_domain[k] == 0 || items_per_domain[k] < 2) {
      throw ConfigError("synth: each domain needs users and at least two items");
    }
  }
  ContextSegments{i_end, h_end, context_width}.validate();
  if (order < 1) throw ConfigError("synth: order must be >= 1");
  if (novelty_skew < 0.0 || novelty_skew >= 1.0) throw ConfigError("synth: novelty_skew in [0, 1)");
  if (active_rate < 0.0 || active_rate > 1.0) throw ConfigError("synth: active_rate in [0, 1]");
  if (rating_min >= rating_max) throw ConfigError("synth: empty rating range");
}

double SynthDomainTruth::user_item_affinity(int user, int item) const {
  double acc = 0.0;
  const auto u = static_cast<std::size_t>(user) * trait_dim;
  const auto v = static_cast<std::size_t>(item) * trait_dim;
  for (std::size_t k = 0; k < trait_dim; ++k) acc += user_traits[u + k] * item_traits[v + k];
  return acc;
}

namespace {

ContextRule draw_rule(const SynthConfig& cfg, std::mt19937_64& rng) {
  ContextRule rule;
  rule.order = cfg.order;
  std::uniform_int_distribution<int> degree(cfg.exact_order ? cfg.order : 1, cfg.order);
  std::uniform_int_distribution<std::size_t> feature(0, cfg.context_width - 1);
  std::normal_distribution<double> coef(0.0, cfg.coef_scale);
  for (std::size_t m = 0; m < cfg.n_monomials; ++m) {
    Monomial mono;
    const int deg = degree(rng);
    for (int d = 0; d < deg; ++d) mono.features.push_back(feature(rng));
    std::sort(mono.features.begin(), mono.features.end());
    mono.coef = coef(rng);
    rule.monomials.push_back(std::move(mono));
  }
  return rule;
}

}  // namespace

SynthOutput synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const ContextRule rule = draw_rule(cfg, rng);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<float>> prototypes(cfg.n_prototypes, std::vector<float>(cfg.context_width));
  for (auto& p : prototypes) {
    for (auto& x : p) x = static_cast<float>(unit(rng));
  }
  std::normal_distribution<double> jitter(0.0, cfg.prototype_jitter);
  std::uniform_int_distribution<std::size_t> pick_proto(0, cfg.n_prototypes ? cfg.n_prototypes - 1 : 0);
  auto draw_context = [&](std::mt19937_64& g) {
    std::vector<float> c(cfg.context_width);
    if (cfg.n_prototypes > 0 && unit(g) < cfg.novelty_skew) {
      const auto& p = prototypes[pick_proto(g)];
      for (std::size_t f = 0; f < c.size(); ++f) {
        c[f] = static_cast<float>(std::clamp(p[f] + jitter(g), 0.0, 1.0));
      }
    } else {
      for (auto& x : c) {
        const double r = unit(g);
        x = cfg.active_rate > 0.0 ? static_cast<float>(r < cfg.active_rate) : static_cast<float>(r);
      }
    }
    return c;
  };

  SynthOutput out;
  std::int64_t key_base = 0;
  for (std::size_t k = 0; k < cfg.n_domains; ++k) {
    const std::size_t n_users = cfg.users_per_domain[k];
    const std::size_t n_items = cfg.items_per_domain[k];
    SynthDomainTruth truth;
    truth.domain_id = k == 0 ? "source" : "target" + std::to_string(k);
    truth.trait_dim = cfg.trait_dim;
    truth.rule = rule;
    truth.global_rating = cfg.global_rating;
    std::normal_distribution<double> trait(0.0, cfg.trait_scale);
    truth.user_traits.resize(n_users * cfg.trait_dim);
    truth.item_traits.resize(n_items * cfg.trait_dim);
    truth.item_context_affinity.resize(n_items);
    for (auto& x : truth.user_traits) x = trait(rng);
    for (auto& x : truth.item_traits) x = trait(rng);
    std::normal_distribution<double> affinity(0.0, 1.0);
    for (auto& x : truth.item_context_affinity) x = affinity(rng);

    DomainDataset ds;
    ds.domain_id = truth.domain_id;
    ds.n_users = n_users;
    ds.n_items = n_items;
    ds.feedback = cfg.feedback;
    ds.segments = {cfg.i_end, cfg.h_end, cfg.context_width};
    for (std::size_t f = 0; f < cfg.context_width; ++f) {
      FeatureMeta meta;
      meta.name = "f" + std::to_string(f);
      meta.segment = f < cfg.i_end   ? Segment::Interactional
                     : f < cfg.h_end ? Segment::Historical
                                     : Segment::Attributional;
      ds.features.push_back(std::move(meta));
    }
    // Keys are offset per domain so no external id is shared across domains.
    ds.user_keys.resize(n_users);
    std::iota(ds.user_keys.begin(), ds.user_keys.end(), key_base);
    key_base += static_cast<std::int64_t>(n_users);
    ds.item_keys.resize(n_items);
    std::iota(ds.item_keys.begin(), ds.item_keys.end(), key_base);
    key_base += static_cast<std::int64_t>(n_items);

    std::uniform_int_distribution<int> pick_user(0, static_cast<int>(n_users) - 1);
    std::uniform_int_distribution<int> pick_item(0, static_cast<int>(n_items) - 1);
    std::normal_distribution<double> noise(0.0, cfg.rating_noise);
    std::vector<double> logits(n_items);
    for (std::size_t i = 0; i < cfg.interactions_per_domain[k]; ++i) {
      Interaction t;
      t.user = pick_user(rng);
      t.context = draw_context(rng);
      const double r = rule(t.context);
      if (cfg.feedback == Feedback::Explicit) {
        t.item = pick_item(rng);
        const double raw = cfg.global_rating + truth.user_item_affinity(t.user, t.item) + r +
                           (cfg.rating_noise > 0.0 ? noise(rng) : 0.0);
        t.rating = static_cast<float>(std::clamp(raw, cfg.rating_min, cfg.rating_max));
      } else {
        for (std::size_t v = 0; v < n_items; ++v) {
          logits[v] = cfg.implicit_temperature *
                      (truth.user_item_affinity(t.user, static_cast<int>(v)) +
                       truth.item_context_affinity[v] * r);
        }
        const double mx = *std::max_element(logits.begin(), logits.end());
        for (auto& l : logits) l = std::exp(l - mx);
        std::discrete_distribution<int> choose(logits.begin(), logits.end());
        t.item = choose(rng);
      }
      ds.interactions.push_back(std::move(t));
    }
    ds.splits.train.resize(ds.interactions.size());
    std::iota(ds.splits.train.begin(), ds.splits.train.end(), std::size_t{0});
    if (ds.interactions.size() >= 3) ds = split(std::move(ds), cfg.seed * 7919 + k);
    ds.validate();
    out.datasets.push_back(std::move(ds));
    out.truth.push_back(std::move(truth));
  }
  return out;
}

std::string serialize_rule(const ContextRule& rule) {
  json j;
  j["order"] = rule.order;
  j["monomials"] = json::array();
  for (const auto& m : rule.monomials) {
    j["monomials"].push_back({{"features", m.features}, {"coef", m.coef}});
  }
  return j.dump(2);
}

ContextRule parse_rule(const std::string& text) {
  try {
    const json j = json::parse(text);
    ContextRule rule;
    rule.order = j.at("order").get<int>();
    for (const auto& m : j.at("monomials")) {
      rule.monomials.push_back({m.at("features").get<std::vector<std::size_t>>(), m.at("coef").get<double>()});
    }
    return rule;
  } catch (const json::exception& e) {
    throw ParseError(std::string("rule file: ") + e.what());
  }
}

SynthConfig synth_config_from_json(const std::string& text) {
  SynthConfig cfg;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("synth config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("synth config must be a JSON object");
  static const std::set<std::string> known{
      "n_domains", "users_per_domain", "items_per_domain", "interactions_per_domain", "context_width",
      "i_end", "h_end", "order", "n_monomials", "coef_scale", "exact_order", "trait_dim", "trait_scale",
      "global_rating", "rating_min", "rating_max", "rating_noise", "implicit_temperature", "novelty_skew",
      "n_prototypes", "prototype_jitter", "active_rate", "seed", "feedback"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown synth config key '" + key + "'");
  }
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      field = j.at(key).get<std::decay_t<decltype(field)>>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("synth config '") + key + "': " + e.what());
    }
  };
  get("n_domains", cfg.n_domains);
  get("users_per_domain", cfg.users_per_domain);
  get("items_per_domain", cfg.items_per_domain);
  get("interactions_per_domain", cfg.interactions_per_domain);
  get("context_width", cfg.context_width);
  get("i_end", cfg.i_end);
  get("h_end", cfg.h_end);
  get("order", cfg.order);
  get("n_monomials", cfg.n_monomials);
  get("coef_scale", cfg.coef_scale);
  get("exact_order", cfg.exact_order);
  get("trait_dim", cfg.trait_dim);
  get("trait_scale", cfg.trait_scale);
  get("global_rating", cfg.global_rating);
  get("rating_min", cfg.rating_min);
  get("rating_max", cfg.rating_max);
  get("rating_noise", cfg.rating_noise);
  get("implicit_temperature", cfg.implicit_temperature);
  get("novelty_skew", cfg.novelty_skew);
  get("n_prototypes", cfg.n_prototypes);
  get("prototype_jitter", cfg.prototype_jitter);
  get("active_rate", cfg.active_rate);
  get("seed", cfg.seed);
  if (j.contains("feedback")) {
    std::string fb;
    get("feedback", fb);
    cfg.feedback = feedback_from_string(fb);
  }
  cfg.validate();
  return cfg;
}

void write_synth_output(const SynthOutput& out, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& ds : out.datasets) {
    const auto sub = dir / ds.domain_id;
    std::filesystem::create_directories(sub);
    write_manifest(manifest_of(ds), sub / "manifest.json");
    write_jsonl(ds, sub / "interactions.jsonl");
  }
  if (!out.truth.empty()) {
    std::ofstream rule(dir / "rule.json");
    rule << serialize_rule(out.truth.front().rule) << "\n";
  }
}

}  // namespace mmt
