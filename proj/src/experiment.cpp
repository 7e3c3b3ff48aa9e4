// SPDX-License-Identifier: Apache-2.0
#include "mmt/experiment.hpp"

#include <fstream>
#include <set>

#include "mmt/checkpoint.hpp"
#include "mmt/error.hpp"

namespace mmt {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& section, std::initializer_list<const char*> known) {
  if (!j.is_object()) throw ConfigError("'" + section + "' must be an object");
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown config key '" + section + "." + key + "'");
  }
}

template <typename V>
void read(const json& j, const char* key, V& out) {
  if (j.contains(key)) out = j.at(key).get<V>();
}

}  // namespace

json ExperimentConfig::to_json() const {
  json m = mmt::to_json(model);
  if (model.segments.width == 0) m.erase("segments");
  if (feedback) {
    m["feedback"] = to_string(*feedback);
  } else {
    m.erase("feedback");
  }
  json methods_json = json::array();
  for (auto m2 : methods) methods_json.push_back(to_string(m2));
  const auto& r = transfer.regularizer;
  return {{"model", m},
          {"train",
           {{"lr", train.lr}, {"batch_size", train.batch_size}, {"epochs", train.max_epochs}, {"patience", train.patience}}},
          {"transfer",
           {{"method", to_string(transfer.method)},
            {"pretrain_epochs", transfer.pretrain_epochs},
            {"eta0", transfer.anneal.eta0},
            {"lambda", transfer.anneal.lambda},
            {"followup_epochs", transfer.anneal.followup_epochs},
            {"reg_weight", transfer.drr.reg_weight},
            {"regularizer",
             {{"latent", r.latent},
              {"hidden", r.hidden},
              {"epochs", r.epochs},
              {"lr", r.lr},
              {"batch_size", r.batch_size},
              {"encoder_steps", r.encoder_steps},
              {"poisoner_steps", r.poisoner_steps},
              {"final_lr_fraction", r.final_lr_fraction},
              {"norm_term", r.norm_term}}}}},
          {"data",
           {{"path", data.path},
            {"source", data.source},
            {"targets", data.targets},
            {"normalize", data.normalize},
            {"min_user_count", data.min_user_count},
            {"min_item_count", data.min_item_count},
            {"split", data.split},
            {"split_seed", data.split_seed}}},
          {"seeds", seeds},
          {"methods", methods_json},
          {"seed", seed},
          {"out", out}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  try {
    check_keys(j, "config", {"model", "train", "transfer", "data", "seeds", "methods", "seed", "out"});
    if (j.contains("model")) {
      json m = j.at("model");
      if (m.contains("feedback")) c.feedback = feedback_from_string(m.at("feedback").get<std::string>());
      c.model = model_config_from_json(m, c.model);
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      check_keys(t, "train", {"lr", "batch_size", "epochs", "patience"});
      read(t, "lr", c.train.lr);
      read(t, "batch_size", c.train.batch_size);
      read(t, "epochs", c.train.max_epochs);
      read(t, "patience", c.train.patience);
    }
    if (j.contains("transfer")) {
      const auto& t = j.at("transfer");
      check_keys(t, "transfer",
                 {"method", "pretrain_epochs", "eta0", "lambda", "followup_epochs", "reg_weight", "regularizer"});
      if (t.contains("method")) c.transfer.method = transfer_method_from_string(t.at("method").get<std::string>());
      read(t, "pretrain_epochs", c.transfer.pretrain_epochs);
      read(t, "eta0", c.transfer.anneal.eta0);
      read(t, "lambda", c.transfer.anneal.lambda);
      read(t, "followup_epochs", c.transfer.anneal.followup_epochs);
      read(t, "reg_weight", c.transfer.drr.reg_weight);
      if (t.contains("regularizer")) {
        const auto& r = t.at("regularizer");
        auto& rc = c.transfer.regularizer;
        check_keys(r, "transfer.regularizer",
                   {"latent", "hidden", "epochs", "lr", "batch_size", "encoder_steps", "poisoner_steps",
                    "final_lr_fraction", "norm_term"});
        read(r, "latent", rc.latent);
        read(r, "hidden", rc.hidden);
        read(r, "epochs", rc.epochs);
        read(r, "lr", rc.lr);
        read(r, "batch_size", rc.batch_size);
        read(r, "encoder_steps", rc.encoder_steps);
        read(r, "poisoner_steps", rc.poisoner_steps);
        read(r, "final_lr_fraction", rc.final_lr_fraction);
        read(r, "norm_term", rc.norm_term);
      }
    }
    if (j.contains("data")) {
      const auto& d = j.at("data");
      check_keys(d, "data",
                 {"path", "source", "targets", "normalize", "min_user_count", "min_item_count", "split", "split_seed"});
      read(d, "path", c.data.path);
      read(d, "source", c.data.source);
      read(d, "targets", c.data.targets);
      read(d, "normalize", c.data.normalize);
      read(d, "min_user_count", c.data.min_user_count);
      read(d, "min_item_count", c.data.min_item_count);
      read(d, "split", c.data.split);
      read(d, "split_seed", c.data.split_seed);
    }
    read(j, "seeds", c.seeds);
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j.at("methods")) c.methods.push_back(transfer_method_from_string(m.get<std::string>()));
    }
    read(j, "seed", c.seed);
    read(j, "out", c.out);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.train.seed = c.seed;
  c.transfer.regularizer.seed = c.seed;
  c.train.validate();
  if (c.seeds.empty()) throw ConfigError("config: seeds must not be empty");
  return c;
}

void apply_override(json& j, const std::string& dotted, const std::string& value) {
  if (dotted.empty()) throw ConfigError("empty override key");
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("malformed override key '" + dotted + "'");
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      json parsed = json::parse(value, nullptr, false);
      (*node)[key] = parsed.is_discarded() ? json(value) : parsed;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

ExperimentConfig load_experiment_config(const std::optional<std::filesystem::path>& file,
                                        const std::vector<std::pair<std::string, std::string>>& overrides) {
  json j = json::object();
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot open config " + file->string());
    j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config " + file->string() + " is not valid JSON");
  }
  for (const auto& [key, value] : overrides) apply_override(j, key, value);
  return ExperimentConfig::from_json(j);
}

DomainDataset load_domain(const std::filesystem::path& dir, const DataConfig& cfg) {
  const auto manifest = read_manifest(dir / "manifest.json");
  auto ds = ingest_jsonl(dir / "interactions.jsonl", manifest, manifest.feedback, cfg.min_user_count,
                         cfg.min_item_count);
  ds = split(std::move(ds), cfg.split, cfg.split_seed);
  ds = normalize(std::move(ds), NormalizationMethod::parse(cfg.normalize));
  ds.validate();
  return ds;
}

ModelConfig bind_to_dataset(const ExperimentConfig& cfg, const DomainDataset& ds) {
  ModelConfig m = cfg.model;
  if (m.segments.width != 0 && !(m.segments == ds.segments)) {
    throw ConfigError("model context layout (" + std::to_string(m.segments.width) + " features) does not match '" +
                      ds.domain_id + "' (" + std::to_string(ds.segments.width) + " features)");
  }
  if (cfg.feedback && *cfg.feedback != ds.feedback) {
    throw ConfigError("config asks for " + to_string(*cfg.feedback) + " feedback but '" + ds.domain_id + "' is " +
                      to_string(ds.feedback));
  }
  m.segments = ds.segments;
  m.feedback = ds.feedback;
  m.validate();
  return m;
}

}  // namespace mmt
