// SPDX-License-Identifier: Apache-2.0
#include "mmt/model.hpp"

#include <algorithm>
#include <set>

#include "mmt/adapter.hpp"
#include "mmt/error.hpp"

namespace mmt {

void ModelConfig::validate() const {
  segments.validate();
  if (segments.width == 0) throw ConfigError("model: context width must be positive");
  if (embedding_dim == 0) throw ConfigError("model: embedding dimension must be positive");
  if (n_c < 2) throw ConfigError("model: n_c must be >= 2");
  if (n_u < 1 || n_v < 1) throw ConfigError("model: tower depths must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model: dropout must lie in [0, 1)");
  if (loss.curriculum_l2 < 0.0) throw ConfigError("model: curriculum_l2 must be >= 0");
  if (feedback == Feedback::Implicit && (loss.n_item_neg < 1 || loss.n_ctx_neg < 1)) {
    throw ConfigError("model: implicit feedback needs at least one negative of each kind");
  }
  if (multimodal && (segments.interactional() == 0 || segments.historical() == 0 ||
                     segments.attributional() == 0)) {
    throw ConfigError("model: multimodal residuals need three non-empty segments");
  }
}

template <typename T>
void CandidateBatch<T>::push(int user, int item, std::span<const float> context,
                             std::optional<float> rating) {
  if (context.size() != width) {
    throw DimensionError("candidate context has " + std::to_string(context.size()) +
                         " features, batch expects " + std::to_string(width));
  }
  users.push_back(user);
  items.push_back(item);
  for (float x : context) contexts.push_back(static_cast<T>(x));
  if (rating) ratings.push_back(static_cast<T>(*rating));
}

template <typename T>
Tensor<T> CandidateBatch<T>::context_tensor() const {
  return Tensor<T>({size(), width}, contexts);
}

template <typename T>
MmtModel<T>::MmtModel(ModelConfig cfg, std::uint64_t seed) : config(std::move(cfg)) {
  config.validate();
  std::mt19937_64 rng(seed);
  m1::init(store, config, rng);
  m3::init(store, config, rng);
  m4::init(store, config);
}

template <typename T>
void MmtModel<T>::add_domain(const DomainDataset& ds, std::uint64_t seed) {
  if (ds.context_width() != config.context_width() || !(ds.segments == config.segments)) {
    throw ConfigError("domain '" + ds.domain_id + "' context layout does not match the model");
  }
  if (ds.feedback != config.feedback) {
    throw ConfigError("domain '" + ds.domain_id + "' feedback is " + to_string(ds.feedback) +
                      ", model expects " + to_string(config.feedback));
  }
  if (has_domain(ds.domain_id)) throw StateError("domain '" + ds.domain_id + "' already present");
  std::mt19937_64 rng(seed);
  const double mean = ds.feedback == Feedback::Explicit ? ds.mean_train_rating() : 0.0;
  m2::init(store, ds.domain_id, ds.n_users, ds.n_items, config.embedding_dim, ds.feedback, mean, rng);
}

template <typename T>
bool MmtModel<T>::has_domain(const std::string& domain) const {
  return store.contains(m2::table(domain, m2::EntityKind::User));
}

template <typename T>
std::vector<std::string> MmtModel<T>::domains() const {
  std::set<std::string> out;
  for (const auto& name : store.names_with_prefix("m2.")) {
    const auto dot = name.find('.', 3);
    out.insert(name.substr(3, dot - 3));
  }
  return {out.begin(), out.end()};
}

template <typename T>
ForwardResult MmtModel<T>::forward(Graph<T>& g, const std::string& domain,
                                   const CandidateBatch<T>& batch, const ForwardOptions& opt) {
  if (!has_domain(domain)) throw StateError("model has no domain '" + domain + "'");
  if (batch.width != config.context_width()) {
    throw DimensionError("batch context width " + std::to_string(batch.width) + " != model width " +
                         std::to_string(config.context_width()));
  }
  auto hook = [&](Site s) -> m1::VarHook {
    if (!opt.use_adapters || !store.contains(adapter_weight(domain, s))) return {};
    return [this, &g, &domain, s](Var x) {
      return residual_forward(g, x, g.param(store.at(adapter_weight(domain, s))),
                              g.param(store.at(adapter_bias(domain, s))));
    };
  };

  ForwardResult r;
  Var contexts = g.constant(batch.context_tensor());
  r.context = m1::forward(g, store, config, contexts, hook(Site::C2));
  m3::RepresentOptions ro;
  ro.user_hook = hook(Site::GatedUser);
  ro.item_hook = hook(Site::GatedItem);
  ro.dropout = config.dropout;
  ro.rng = opt.rng;
  ro.training = opt.training;
  r.rep = m3::represent(g, store, config, domain, batch.users, batch.items, r.context.pooled, ro);
  if (config.loss.context_bias_enabled) r.s_c = m4::context_bias(g, store, r.context.pooled);
  if (config.feedback == Feedback::Explicit) {
    Var s_u = m2::lookup_bias(g, store, domain, m2::EntityKind::User, batch.users);
    Var s_v = m2::lookup_bias(g, store, domain, m2::EntityKind::Item, batch.items);
    Var global = g.param(store.at(m2::global_bias(domain)));
    r.score = m4::score_explicit(g, r.rep.user, r.rep.item, r.s_c, s_u, s_v, global);
  } else {
    r.score = m4::score_implicit(g, r.rep.user, r.rep.item, r.s_c);
  }
  return r;
}

template <typename T>
std::vector<double> MmtModel<T>::score(const std::string& domain, const CandidateBatch<T>& batch) {
  constexpr std::size_t kChunk = 2048;
  std::vector<double> out;
  out.reserve(batch.size());
  for (std::size_t begin = 0; begin < batch.size(); begin += kChunk) {
    const std::size_t end = std::min(batch.size(), begin + kChunk);
    CandidateBatch<T> part(batch.width);
    part.users.assign(batch.users.begin() + begin, batch.users.begin() + end);
    part.items.assign(batch.items.begin() + begin, batch.items.begin() + end);
    part.contexts.assign(batch.contexts.begin() + begin * batch.width,
                         batch.contexts.begin() + end * batch.width);
    Graph<T> g;
    const auto& v = g.value(forward(g, domain, part).score);
    for (T x : v.values()) out.push_back(static_cast<double>(x));
  }
  return out;
}

template <typename T>
BatchLoss<T> batch_loss(Graph<T>& g, MmtModel<T>& model, const DomainDataset& ds,
                        std::span<const std::size_t> indices, std::mt19937_64& neg_rng,
                        const ForwardOptions& opt) {
  const auto& cfg = model.config;
  CandidateBatch<T> batch(cfg.context_width());
  for (std::size_t i : indices) batch.push(ds.interactions.at(i));
  const std::size_t n_pos = batch.size();
  if (n_pos == 0) throw DimensionError("loss over an empty batch");

  BatchLoss<T> out;
  out.n_positive = n_pos;
  if (cfg.feedback == Feedback::Explicit) {
    if (batch.ratings.size() != n_pos) throw SchemaError("explicit loss needs a rating on every positive");
    out.forward = model.forward(g, ds.domain_id, batch, opt);
    Var ratings = g.constant(Tensor<T>({n_pos, 1}, batch.ratings));
    out.terms = m4::loss_explicit(g, model.store, cfg.loss, out.forward.score, ratings, out.forward.s_c);
    return out;
  }

  for (std::size_t i : indices) {
    for (const auto& ref : draw_negatives(ds, i, cfg.loss.n_item_neg, cfg.loss.n_ctx_neg, neg_rng)) {
      batch.push(ref.user, ref.item, ds.interactions[ref.context_source].context);
    }
  }
  out.forward = model.forward(g, ds.domain_id, batch, opt);
  Var pos = g.slice_rows(out.forward.score, 0, n_pos);
  Var neg = g.slice_rows(out.forward.score, n_pos, batch.size());
  std::optional<Var> s_c_pos;
  if (out.forward.s_c) s_c_pos = g.slice_rows(*out.forward.s_c, 0, n_pos);
  out.terms = m4::loss_implicit(g, model.store, cfg.loss, pos, neg, s_c_pos);
  return out;
}

template struct CandidateBatch<float>;
template struct CandidateBatch<double>;
template class MmtModel<float>;
template class MmtModel<double>;
template BatchLoss<float> batch_loss<float>(Graph<float>&, MmtModel<float>&, const DomainDataset&,
                                            std::span<const std::size_t>, std::mt19937_64&,
                                            const ForwardOptions&);
template BatchLoss<double> batch_loss<double>(Graph<double>&, MmtModel<double>&, const DomainDataset&,
                                              std::span<const std::size_t>, std::mt19937_64&,
                                              const ForwardOptions&);

}  // namespace mmt
