// SPDX-License-Identifier: Apache-2.0
#include "mmt/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <optional>

#include "mmt/error.hpp"

namespace mmt {

using nlohmann::json;

json EvalReport::to_json() const {
  return {{"domain_id", domain_id}, {"method", method},   {"metrics", metrics},
          {"wall_seconds", wall_seconds}, {"epochs", epochs}, {"seed", seed}};
}

EvalReport EvalReport::from_json(const json& j) {
  EvalReport r;
  r.domain_id = j.at("domain_id").get<std::string>();
  r.method = j.at("method").get<std::string>();
  r.metrics = j.at("metrics").get<std::map<std::string, double>>();
  r.wall_seconds = j.value("wall_seconds", 0.0);
  r.epochs = j.value("epochs", std::size_t{0});
  r.seed = j.value("seed", std::uint64_t{0});
  return r;
}

void write_reports_json(const std::vector<EvalReport>& reports, const std::filesystem::path& path) {
  json arr = json::array();
  for (const auto& r : reports) arr.push_back(r.to_json());
  std::ofstream out(path);
  if (!out) throw EvalError("cannot write report " + path.string());
  out << arr.dump(2) << "\n";
}

void write_reports_csv(const std::vector<EvalReport>& reports, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw EvalError("cannot write report " + path.string());
  out << "domain,method,metric,value,seed,wall_seconds\n";
  out.precision(10);
  for (const auto& r : reports) {
    for (const auto& [name, value] : r.metrics) {
      out << r.domain_id << ',' << r.method << ',' << name << ',' << value << ',' << r.seed << ','
          << r.wall_seconds << '\n';
    }
  }
}

template <typename T>
ScoreFn model_scorer(MmtModel<T>& model, const std::string& domain) {
  return [&model, domain](const CandidateBatch<float>& batch) {
    if constexpr (std::is_same_v<T, float>) {
      return model.score(domain, batch);
    } else {
      CandidateBatch<T> b(batch.width);
      b.users = batch.users;
      b.items = batch.items;
      b.contexts.assign(batch.contexts.begin(), batch.contexts.end());
      return model.score(domain, b);
    }
  };
}

std::size_t positive_rank(std::span<const double> scores) {
  if (scores.empty()) throw EvalError("ranking needs at least the positive's score");
  std::size_t rank = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] >= scores[0]) ++rank;
  }
  return rank;
}

std::map<std::size_t, double> hit_rate(const DomainDataset& ds, std::span<const std::size_t> positives,
                                       const ScoreFn& score, const std::vector<std::size_t>& ks,
                                       std::size_t n_neg, std::uint64_t seed) {
  if (positives.empty()) throw EvalError("hit rate over an empty split");
  const std::size_t per = n_neg + 1;
  constexpr std::size_t kGroup = 32;
  std::map<std::size_t, double> hits;
  for (std::size_t k : ks) hits[k] = 0.0;
  for (std::size_t begin = 0; begin < positives.size(); begin += kGroup) {
    const std::size_t end = std::min(positives.size(), begin + kGroup);
    CandidateBatch<float> batch(ds.context_width());
    for (std::size_t p = begin; p < end; ++p) {
      const std::size_t idx = positives[p];
      std::seed_seq sseq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                         static_cast<std::uint32_t>(idx), static_cast<std::uint32_t>(idx >> 32)};
      std::mt19937_64 rng(sseq);
      std::vector<NegativeRef> negs;
      try {
        negs = draw_negatives(ds, idx, n_neg / 2, n_neg - n_neg / 2, rng);
      } catch (const SamplingError& e) {
        throw EvalError(std::string("cannot draw evaluation negatives: ") + e.what());
      }
      const auto& pos = ds.interactions.at(idx);
      batch.push(pos.user, pos.item, pos.context);
      for (const auto& n : negs) batch.push(n.user, n.item, ds.interactions[n.context_source].context);
    }
    const auto scores = score(batch);
    if (scores.size() != batch.size()) throw EvalError("scorer returned the wrong number of scores");
    for (std::size_t p = 0; p < end - begin; ++p) {
      const std::size_t rank = positive_rank(std::span<const double>(scores.data() + p * per, per));
      for (std::size_t k : ks) {
        if (rank < k) hits[k] += 1.0;
      }
    }
  }
  for (auto& [k, v] : hits) v /= static_cast<double>(positives.size());
  return hits;
}

ErrorMetrics rmse_mae(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size()) throw EvalError("prediction and target counts differ");
  if (predictions.empty()) throw EvalError("error metrics over an empty split");
  double sq = 0.0, abs = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double r = targets[i] - predictions[i];
    sq += r * r;
    abs += std::abs(r);
  }
  const double n = static_cast<double>(predictions.size());
  return {std::sqrt(sq / n), abs / n};
}

template <typename T>
ErrorMetrics rmse_mae(MmtModel<T>& model, const DomainDataset& ds) {
  if (ds.feedback != Feedback::Explicit) throw EvalError("rmse/mae need explicit feedback");
  if (ds.splits.test.empty()) throw EvalError("domain '" + ds.domain_id + "' has an empty test split");
  CandidateBatch<T> batch(ds.context_width());
  std::vector<double> targets;
  for (std::size_t i : ds.splits.test) {
    const auto& t = ds.interactions.at(i);
    batch.push(t.user, t.item, t.context);
    targets.push_back(static_cast<double>(t.rating.value()));
  }
  const auto preds = model.score(ds.domain_id, batch);
  return rmse_mae(preds, targets);
}

template <typename T>
std::map<std::string, double> evaluate(MmtModel<T>& model, const DomainDataset& ds, std::uint64_t seed) {
  if (ds.feedback == Feedback::Explicit) {
    const auto m = rmse_mae(model, ds);
    return {{"rmse", m.rmse}, {"mae", m.mae}};
  }
  if (ds.splits.test.empty()) throw EvalError("domain '" + ds.domain_id + "' has an empty test split");
  const auto hr = hit_rate(ds, ds.splits.test, model_scorer(model, ds.domain_id), {1, 5}, 100, seed);
  return {{"hr@1", hr.at(1)}, {"hr@5", hr.at(5)}};
}

double headline_loss(const std::map<std::string, double>& metrics) {
  if (auto it = metrics.find("rmse"); it != metrics.end()) return it->second;
  if (auto it = metrics.find("hr@1"); it != metrics.end()) return 1.0 - it->second;
  throw EvalError("report carries neither rmse nor hr@1");
}

std::vector<RobustnessRow> robustness_sweep(const ModelConfig& model_cfg, const DomainDataset& ds,
                                            const RobustnessConfig& cfg) {
  if (cfg.seeds.empty()) throw ConfigError("robustness sweep needs at least one seed");
  std::vector<double> fractions{0.0};
  for (double f : cfg.fractions) {
    if (f != 0.0) fractions.push_back(f);
  }
  std::vector<RobustnessRow> rows;
  for (double f : fractions) {
    RobustnessRow row;
    row.fraction = f;
    for (std::uint64_t seed : cfg.seeds) {
      const DomainDataset dropped = context_drop(ds, f, seed * 31 + 17);
      MmtModel<float> model(model_cfg, seed);
      model.add_domain(dropped, seed + 1);
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      train(model, dropped, tc);
      row.metric.push_back(headline_loss(evaluate(model, dropped, seed)));
    }
    rows.push_back(std::move(row));
  }
  for (auto& row : rows) {
    double acc = 0.0;
    for (std::size_t s = 0; s < row.metric.size(); ++s) {
      const double base = rows.front().metric[s];
      const double d = base > 0.0 ? 100.0 * (row.metric[s] - base) / base : 0.0;
      row.degradation.push_back(d);
      acc += d;
    }
    row.mean_degradation = acc / static_cast<double>(row.metric.size());
  }
  return rows;
}

template <typename T>
MmtModel<T> pretrain_target(const ModelConfig& cfg, const DomainDataset& ds, std::size_t epochs,
                            const TrainConfig& train_cfg) {
  MmtModel<T> model(cfg, train_cfg.seed * 1000 + 11);
  model.add_domain(ds, train_cfg.seed * 1000 + 12);
  if (epochs > 0) {
    TrainConfig tc = train_cfg;
    tc.max_epochs = epochs;
    tc.patience = 0;
    train(model, ds, tc);
  }
  return model;
}

namespace {

using clock_type = std::chrono::steady_clock;

double since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

struct Curve {
  std::vector<double> elapsed;
  std::vector<double> validation;
  double total = 0.0;

  /// Seconds until the validation metric first reached `threshold`; nullopt if
  /// it never did.
  std::optional<double> time_to(double threshold) const {
    for (std::size_t i = 0; i < validation.size(); ++i) {
      if (validation[i] <= threshold) return elapsed[i];
    }
    return std::nullopt;
  }
};

}  // namespace

CompareResult compare_transfer(const ModelConfig& model_cfg, const DomainDataset& source,
                               const std::vector<DomainDataset>& targets, const CompareConfig& cfg) {
  for (const auto& t : targets) {
    if (!(t.segments == source.segments)) {
      throw ConfigError("target '" + t.domain_id + "' context layout differs from the source");
    }
  }
  const bool want_drr = std::find(cfg.methods.begin(), cfg.methods.end(), TransferMethod::Drr) != cfg.methods.end();
  CompareResult result;
  json runs = json::array();
  for (std::uint64_t seed : cfg.seeds) {
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    auto t0 = clock_type::now();
    MmtModel<float> src(model_cfg, seed);
    src.add_domain(source, seed + 1);
    const auto src_train = train(src, source, tc);
    EvalReport src_report{source.domain_id, "source", evaluate(src, source, seed), since(t0),
                          src_train.epochs.size(), seed};
    result.reports.push_back(src_report);

    double reg_seconds = 0.0;
    if (want_drr) {
      t0 = clock_type::now();
      for (Site s : kSites) {
        RegularizerConfig rc = cfg.regularizer;
        rc.seed = seed * 7 + static_cast<std::uint64_t>(s);
        const auto inputs = collect_site_inputs(src, source, s, source.splits.train);
        train_regularizer(src.store, s, inputs, rc);
      }
      reg_seconds = since(t0);
    }
    const double reg_share = targets.empty() ? 0.0 : reg_seconds / static_cast<double>(targets.size());

    for (std::size_t k = 0; k < targets.size(); ++k) {
      const auto& ds = targets[k];
      TrainConfig ttc = tc;
      ttc.seed = seed * 100 + k + 1;

      Curve curve;
      t0 = clock_type::now();
      MmtModel<float> scratch(model_cfg, ttc.seed * 1000 + 11);
      scratch.add_domain(ds, ttc.seed * 1000 + 12);
      const auto sr = train(scratch, ds, ttc, {}, [&](const EpochLog& log) {
        curve.elapsed.push_back(since(t0));
        curve.validation.push_back(log.validation);
      });
      curve.total = since(t0);
      const auto scratch_metrics = evaluate(scratch, ds, seed);
      const double scratch_loss = headline_loss(scratch_metrics);
      result.reports.push_back({ds.domain_id, "scratch", scratch_metrics, curve.total, sr.epochs.size(), seed});

      json run = {{"seed", seed}, {"domain", ds.domain_id}, {"scratch", scratch_metrics}};
      for (TransferMethod m : cfg.methods) {
        t0 = clock_type::now();
        auto model = pretrain_target<float>(model_cfg, ds, cfg.pretrain_epochs, ttc);
        direct_transfer(src, model);
        std::size_t epochs = cfg.pretrain_epochs;
        if (m == TransferMethod::Anneal) {
          const auto ar = anneal_adapt(model, ds, ttc, cfg.anneal);
          epochs += 1 + ar.followup.epochs.size();
        } else if (m == TransferMethod::Drr) {
          import_regularizers(src.store, model.store);
          epochs += drr_adapt(model, ds, ttc, cfg.drr).epochs.size();
        }
        double seconds = since(t0);
        if (m == TransferMethod::Drr) seconds += reg_share;
        const double adapted_val = validation_metric(model, ds, ds.splits.validation);
        auto metrics = evaluate(model, ds, seed);
        const double loss = headline_loss(metrics);
        metrics["delta_pct"] = scratch_loss > 0.0 ? 100.0 * (scratch_loss - loss) / scratch_loss : 0.0;
        metrics["validation"] = adapted_val;
        // Scratch never matching the adapted quality leaves the ratio unbounded;
        // its whole run then gives a lower bound.
        const auto reach = curve.time_to(adapted_val);
        metrics["scratch_reached"] = reach ? 1.0 : 0.0;
        metrics["speedup"] = seconds > 0.0 ? reach.value_or(curve.total) / seconds : 0.0;
        result.reports.push_back({ds.domain_id, to_string(m), metrics, seconds, epochs, seed});
        run[to_string(m)] = metrics;
      }
      runs.push_back(std::move(run));
    }
  }

  json summary = json::object();
  for (const auto& r : result.reports) {
    if (r.method == "source" || r.method == "scratch") continue;
    auto& slot = summary[r.domain_id][r.method];
    slot["delta_pct"].push_back(r.metrics.at("delta_pct"));
    slot["speedup"].push_back(r.metrics.at("speedup"));
  }
  for (auto& [domain, methods] : summary.items()) {
    for (auto& [method, slot] : methods.items()) {
      double d = 0.0, s = 0.0;
      std::size_t wins = 0;
      for (double v : slot["delta_pct"]) {
        d += v;
        if (v > 0.0) ++wins;
      }
      for (double v : slot["speedup"]) s += v;
      const double n = static_cast<double>(slot["delta_pct"].size());
      slot["mean_delta_pct"] = d / n;
      slot["mean_speedup"] = s / n;
      slot["wins"] = wins;
    }
  }
  result.summary = {{"runs", runs}, {"by_domain", summary}};
  return result;
}

#define MMT_INSTANTIATE(T)                                                                          \
  template ScoreFn model_scorer<T>(MmtModel<T>&, const std::string&);                               \
  template ErrorMetrics rmse_mae<T>(MmtModel<T>&, const DomainDataset&);                            \
  template std::map<std::string, double> evaluate<T>(MmtModel<T>&, const DomainDataset&,            \
                                                     std::uint64_t);                                \
  template MmtModel<T> pretrain_target<T>(const ModelConfig&, const DomainDataset&, std::size_t,    \
                                          const TrainConfig&);
MMT_INSTANTIATE(float)
MMT_INSTANTIATE(double)
#undef MMT_INSTANTIATE

}  // namespace mmt
