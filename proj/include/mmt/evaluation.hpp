// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmt/transfer.hpp"

namespace mmt {

struct EvalReport {
  std::string domain_id;
  std::string method;
  std::map<std::string, double> metrics;
  double wall_seconds = 0.0;
  std::size_t epochs = 0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

void write_reports_json(const std::vector<EvalReport>& reports, const std::filesystem::path& path);
/// Columns: domain,method,metric,value,seed,wall_seconds.
void write_reports_csv(const std::vector<EvalReport>& reports, const std::filesystem::path& path);

/// Scores a batch of candidates; higher means more relevant.
using ScoreFn = std::function<std::vector<double>(const CandidateBatch<float>&)>;

template <typename T>
ScoreFn model_scorer(MmtModel<T>& model, const std::string& domain);

/// Number of negatives scoring at least as high as the positive (ties count
/// against the positive). scores[0] is the positive.
std::size_t positive_rank(std::span<const double> scores);

/// Per positive: n_neg / 2 item negatives and n_neg - n_neg / 2 context
/// negatives, fixed by (seed, positive index). hit@K when positive_rank < K.
std::map<std::size_t, double> hit_rate(const DomainDataset& ds, std::span<const std::size_t> positives,
                                       const ScoreFn& score, const std::vector<std::size_t>& ks = {1, 5},
                                       std::size_t n_neg = 100, std::uint64_t seed = 1);

struct ErrorMetrics {
  double rmse = 0.0;
  double mae = 0.0;
};

ErrorMetrics rmse_mae(std::span<const double> predictions, std::span<const double> targets);

/// Over the test split.
template <typename T>
ErrorMetrics rmse_mae(MmtModel<T>& model, const DomainDataset& ds);

/// Test-split metrics for the dataset's feedback mode: hr@1, hr@5 or rmse, mae.
template <typename T>
std::map<std::string, double> evaluate(MmtModel<T>& model, const DomainDataset& ds, std::uint64_t seed = 1);

/// The metric used to compare runs, oriented so that lower is better
/// (rmse, or 1 - hr@1).
double headline_loss(const std::map<std::string, double>& metrics);

struct RobustnessConfig {
  std::vector<double> fractions{0.05, 0.10, 0.15, 0.20};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  TrainConfig train;
};

struct RobustnessRow {
  double fraction = 0.0;
  std::vector<double> metric;       // headline loss per seed
  std::vector<double> degradation;  // percent worsening per seed vs fraction 0
  double mean_degradation = 0.0;
};

/// Retrains from scratch per fraction and seed on context-dropped data (train
/// and test alike). The first row is fraction 0.
std::vector<RobustnessRow> robustness_sweep(const ModelConfig& model_cfg, const DomainDataset& ds,
                                            const RobustnessConfig& cfg);

struct CompareConfig {
  std::vector<TransferMethod> methods{TransferMethod::Direct, TransferMethod::Anneal, TransferMethod::Drr};
  std::vector<std::uint64_t> seeds{1};
  TrainConfig train;
  std::size_t pretrain_epochs = 2;
  AnnealConfig anneal;
  RegularizerConfig regularizer;
  DrrConfig drr;
};

struct CompareResult {
  std::vector<EvalReport> reports;
  nlohmann::json summary;
};

/// Per seed: trains the source, then per target a from-scratch baseline and
/// each method (pretrain, direct transfer, adaptation). Reports carry the test
/// metrics, "delta_pct" against scratch (positive = better) and, for
/// adaptations, "speedup": scratch seconds to reach the adapted validation
/// metric divided by adaptation seconds. When scratch never gets there,
/// "scratch_reached" is 0 and "speedup" uses the whole scratch run (a lower
/// bound). DRR seconds include an equal share of regularizer training.
CompareResult compare_transfer(const ModelConfig& model_cfg, const DomainDataset& source,
                               const std::vector<DomainDataset>& targets, const CompareConfig& cfg);

/// Pretrains a fresh target model for `epochs` epochs of all modules.
template <typename T>
MmtModel<T> pretrain_target(const ModelConfig& cfg, const DomainDataset& ds, std::size_t epochs,
                            const TrainConfig& train_cfg);

}  // namespace mmt
