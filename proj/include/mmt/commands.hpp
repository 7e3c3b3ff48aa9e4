// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "mmt/experiment.hpp"
#include "mmt/gradcheck.hpp"
#include "mmt/synth.hpp"

namespace mmt {

/// Trains all modules on data.path. Writes <out>/checkpoint, <out>/report.json,
/// <out>/report.csv and the per-epoch log <out>/epochs.csv.
EvalReport cmd_train(const ExperimentConfig& cfg);

/// Pretrains a target model on data.path, copies the shared modules from the
/// source checkpoint and adapts with transfer.method. DRR needs regularizers:
/// taken from the checkpoint when present, else trained on data.source.
EvalReport cmd_transfer(const ExperimentConfig& cfg, const std::filesystem::path& source_ckpt);

/// Test-split metrics of a checkpoint on data.path; writes <out>/report.json.
EvalReport cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& ckpt);

/// Generates synthetic domains from a JSON SynthConfig into `out_dir`.
SynthOutput cmd_synth(const std::filesystem::path& synth_config, const std::filesystem::path& out_dir);

GradCheckReport cmd_gradcheck(const ExperimentConfig& cfg);

/// compare_transfer with data.path as the source and data.targets; writes
/// <out>/reports.json, <out>/reports.csv and <out>/summary.json.
CompareResult cmd_compare(const ExperimentConfig& cfg);

}  // namespace mmt
