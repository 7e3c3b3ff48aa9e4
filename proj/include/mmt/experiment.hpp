// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mmt/evaluation.hpp"

namespace mmt {

struct DataConfig {
  /// Domain directory (manifest.json + interactions.jsonl).
  std::string path;
  /// Source domain directory, used when DRR needs regularizers the source
  /// checkpoint does not carry.
  std::string source;
  /// Target domain directories for `compare`.
  std::vector<std::string> targets;
  std::string normalize = "minmax";
  std::size_t min_user_count = 1;
  std::size_t min_item_count = 1;
  std::array<double, 3> split{0.8, 0.1, 0.1};
  std::uint64_t split_seed = 1;
};

struct TransferPlan {
  TransferMethod method = TransferMethod::Drr;
  std::size_t pretrain_epochs = 2;
  AnnealConfig anneal;
  RegularizerConfig regularizer;
  DrrConfig drr;
};

struct ExperimentConfig {
  ModelConfig model;
  /// Set when the config names a feedback mode; the dataset must agree.
  std::optional<Feedback> feedback;
  TrainConfig train;
  TransferPlan transfer;
  DataConfig data;
  /// Seeds for `compare`; other commands use `seed`.
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<TransferMethod> methods{TransferMethod::Direct, TransferMethod::Anneal, TransferMethod::Drr};
  std::uint64_t seed = 1;
  std::string out = "out";

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are a ConfigError.
  static ExperimentConfig from_json(const nlohmann::json& j);
};

/// Sets `dotted` (e.g. "train.lr") inside `j`. The value is read as JSON when
/// it parses ("0.01", "true", "[1,2]") and as a string otherwise.
void apply_override(nlohmann::json& j, const std::string& dotted, const std::string& value);

/// Defaults, then the JSON file (if any), then the overrides in order.
ExperimentConfig load_experiment_config(const std::optional<std::filesystem::path>& file,
                                        const std::vector<std::pair<std::string, std::string>>& overrides);

/// Reads, filters, normalizes and splits a domain directory.
DomainDataset load_domain(const std::filesystem::path& dir, const DataConfig& cfg);

/// The model config with context layout and feedback taken from the dataset.
/// ConfigError when the config pins a different layout or feedback mode.
ModelConfig bind_to_dataset(const ExperimentConfig& cfg, const DomainDataset& ds);

}  // namespace mmt
