// SPDX-License-Identifier: Apache-2.0
#include "mmt/commands.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <fstream>

#include "mmt/checkpoint.hpp"
#include "mmt/error.hpp"

namespace mmt {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

DomainDataset load_data(const ExperimentConfig& cfg) {
  if (cfg.data.path.empty()) throw ConfigError("data.path is not set");
  auto ds = load_domain(cfg.data.path, cfg.data);
  spdlog::info("loaded '{}': {} users, {} items, {} interactions ({} train / {} val / {} test)", ds.domain_id,
               ds.n_users, ds.n_items, ds.interactions.size(), ds.splits.train.size(), ds.splits.validation.size(),
               ds.splits.test.size());
  return ds;
}

void write_report(const EvalReport& report, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  write_reports_json({report}, out / "report.json");
  write_reports_csv({report}, out / "report.csv");
}

std::string metrics_line(const std::map<std::string, double>& metrics) {
  std::string s;
  for (const auto& [k, v] : metrics) s += (s.empty() ? "" : ", ") + k + "=" + std::to_string(v);
  return s;
}

void ensure_regularizers(MmtModel<float>& src, const ExperimentConfig& cfg) {
  bool missing = false;
  for (Site s : kSites) missing = missing || !has_regularizer(src.store, s);
  if (!missing) return;
  if (cfg.data.source.empty()) {
    throw ConfigError("drr: the source checkpoint has no regularizers; set data.source to train them");
  }
  const auto source = load_domain(cfg.data.source, cfg.data);
  if (!src.has_domain(source.domain_id)) {
    throw ConfigError("drr: checkpoint has no embeddings for source domain '" + source.domain_id + "'");
  }
  for (Site s : kSites) {
    if (has_regularizer(src.store, s)) continue;
    RegularizerConfig rc = cfg.transfer.regularizer;
    rc.seed = cfg.seed * 7 + static_cast<std::uint64_t>(s);
    const auto inputs = collect_site_inputs(src, source, s, source.splits.train);
    const auto history = train_regularizer(src.store, s, inputs, rc);
    const auto& last = history.epochs.back();
    spdlog::info("regularizer {}: KL clean {:.4f}, poisoned {:.4f}, |P| {:.4f}", to_string(s), last.kl_clean,
                 last.kl_poisoned, last.poison_norm);
  }
}

}  // namespace

EvalReport cmd_train(const ExperimentConfig& cfg) {
  const auto ds = load_data(cfg);
  const auto mc = bind_to_dataset(cfg, ds);
  const auto t0 = std::chrono::steady_clock::now();
  MmtModel<float> model(mc, cfg.seed);
  model.add_domain(ds, cfg.seed + 1);

  const std::filesystem::path out = cfg.out;
  std::filesystem::create_directories(out);
  std::ofstream log(out / "epochs.csv");
  log << "epoch,train_loss,validation,seconds\n";
  const auto result = train(model, ds, cfg.train, {}, [&](const EpochLog& e) {
    spdlog::info("epoch {:3d}  train {:.6f}  validation {:.6f}  ({:.2f}s)", e.epoch, e.train_loss, e.validation,
                 e.seconds);
    log << e.epoch << "," << e.train_loss << "," << e.validation << "," << e.seconds << "\n";
  });
  EvalReport report{ds.domain_id, "train", evaluate(model, ds, cfg.seed), seconds_since(t0), result.epochs.size(),
                    cfg.seed};
  spdlog::info("best epoch {} of {}; test {}", result.best_epoch, result.epochs.size(), metrics_line(report.metrics));
  save_checkpoint(model, out / "checkpoint");
  write_report(report, out);
  return report;
}

EvalReport cmd_transfer(const ExperimentConfig& cfg, const std::filesystem::path& source_ckpt) {
  auto src = load_checkpoint(source_ckpt);
  const auto ds = load_data(cfg);
  if (!(src.config.segments == ds.segments)) {
    throw TransferError("target '" + ds.domain_id + "' context layout differs from the source checkpoint");
  }
  if (src.config.feedback != ds.feedback) {
    throw TransferError("target '" + ds.domain_id + "' is " + to_string(ds.feedback) + ", source checkpoint is " +
                        to_string(src.config.feedback));
  }
  const auto method = cfg.transfer.method;
  if (method == TransferMethod::Drr) ensure_regularizers(src, cfg);

  const auto t0 = std::chrono::steady_clock::now();
  auto model = pretrain_target<float>(src.config, ds, cfg.transfer.pretrain_epochs, cfg.train);
  direct_transfer(src, model);
  std::size_t epochs = cfg.transfer.pretrain_epochs;
  if (method == TransferMethod::Anneal) {
    const auto ar = anneal_adapt(model, ds, cfg.train, cfg.transfer.anneal);
    spdlog::info("anneal: lambda {:.4f}, annealing-epoch loss {:.6f}, {} follow-up epochs", ar.lambda,
                 ar.anneal_loss, ar.followup.epochs.size());
    epochs += 1 + ar.followup.epochs.size();
  } else if (method == TransferMethod::Drr) {
    import_regularizers(src.store, model.store);
    const auto r = drr_adapt(model, ds, cfg.train, cfg.transfer.drr);
    spdlog::info("drr: {} epochs, best validation {:.6f}", r.epochs.size(), r.best_validation);
    epochs += r.epochs.size();
  }
  EvalReport report{ds.domain_id, to_string(method), evaluate(model, ds, cfg.seed), seconds_since(t0), epochs,
                    cfg.seed};
  spdlog::info("{} transfer to '{}': {}", to_string(method), ds.domain_id, metrics_line(report.metrics));
  const std::filesystem::path out = cfg.out;
  save_checkpoint(model, out / "checkpoint");
  write_report(report, out);
  return report;
}

EvalReport cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& ckpt) {
  auto model = load_checkpoint(ckpt);
  const auto ds = load_data(cfg);
  if (!model.has_domain(ds.domain_id)) {
    throw EvalError("checkpoint has no embeddings for domain '" + ds.domain_id + "'");
  }
  if (!(model.config.segments == ds.segments) || model.config.feedback != ds.feedback) {
    throw EvalError("checkpoint model does not match domain '" + ds.domain_id + "'");
  }
  const auto t0 = std::chrono::steady_clock::now();
  EvalReport report{ds.domain_id, "eval", evaluate(model, ds, cfg.seed), seconds_since(t0), 0, cfg.seed};
  spdlog::info("'{}': {}", ds.domain_id, metrics_line(report.metrics));
  write_report(report, cfg.out);
  return report;
}

SynthOutput cmd_synth(const std::filesystem::path& synth_config, const std::filesystem::path& out_dir) {
  std::ifstream in(synth_config);
  if (!in) throw ConfigError("cannot open synth config " + synth_config.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto out = synth_generate(synth_config_from_json(text));
  write_synth_output(out, out_dir);
  for (const auto& ds : out.datasets) {
    spdlog::info("wrote {}/{} ({} interactions)", out_dir.string(), ds.domain_id, ds.interactions.size());
  }
  return out;
}

GradCheckReport cmd_gradcheck(const ExperimentConfig& cfg) {
  GradCheckConfig gc;
  gc.seed = cfg.seed;
  auto report = run_gradcheck(gc);
  for (const auto& c : report.cases) {
    spdlog::info("{:<22} {:5d} coords  max rel err {:.3e} at {}  {}", c.name, c.coordinates, c.max_rel_error,
                 c.worst, c.passed ? "ok" : "FAIL");
  }
  spdlog::info("gradient check {} in {:.2f}s", report.passed() ? "passed" : "FAILED", report.seconds);
  return report;
}

CompareResult cmd_compare(const ExperimentConfig& cfg) {
  const auto source = load_data(cfg);
  if (cfg.data.targets.empty()) throw ConfigError("compare: data.targets is empty");
  std::vector<DomainDataset> targets;
  for (const auto& t : cfg.data.targets) targets.push_back(load_domain(t, cfg.data));
  const auto mc = bind_to_dataset(cfg, source);

  CompareConfig cc;
  cc.methods = cfg.methods;
  cc.seeds = cfg.seeds;
  cc.train = cfg.train;
  cc.pretrain_epochs = cfg.transfer.pretrain_epochs;
  cc.anneal = cfg.transfer.anneal;
  cc.regularizer = cfg.transfer.regularizer;
  cc.drr = cfg.transfer.drr;
  auto result = compare_transfer(mc, source, targets, cc);

  const std::filesystem::path out = cfg.out;
  std::filesystem::create_directories(out);
  write_reports_json(result.reports, out / "reports.json");
  write_reports_csv(result.reports, out / "reports.csv");
  std::ofstream(out / "summary.json") << result.summary.dump(2) << "\n";
  for (const auto& [domain, methods] : result.summary.at("by_domain").items()) {
    for (const auto& [method, slot] : methods.items()) {
      spdlog::info("{} {}: mean delta {:.2f}%, wins {}/{}, mean speedup {:.2f}", domain, method,
                   slot.at("mean_delta_pct").get<double>(), slot.at("wins").get<std::size_t>(),
                   slot.at("delta_pct").size(), slot.at("mean_speedup").get<double>());
    }
  }
  return result;
}

}  // namespace mmt
