// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mmt/model.hpp"

namespace mmt {

inline constexpr int kCheckpointFormat = 1;

nlohmann::json to_json(const ModelConfig& cfg);
/// Missing keys keep their defaults; unknown keys are an error.
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

std::string sha256_hex(std::span<const unsigned char> bytes);

/// Little-endian float32 bytes of every parameter whose name starts with
/// `prefix`, in name order.
std::vector<unsigned char> parameter_bytes(const ParameterStore<float>& store, std::string_view prefix = "");
std::string parameter_hash(const ParameterStore<float>& store, std::string_view prefix = "");

/// Writes <dir>/manifest.json and <dir>/params.bin. Optimizer moments are not kept.
void save_checkpoint(const MmtModel<float>& model, const std::filesystem::path& dir);

/// CheckpointError on missing files, a blob that does not match the manifest
/// hash, or entries that overrun the blob.
MmtModel<float> load_checkpoint(const std::filesystem::path& dir);

/// The blob hash recorded in the manifest.
std::string checkpoint_hash(const std::filesystem::path& dir);

}  // namespace mmt
