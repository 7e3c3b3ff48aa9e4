// SPDX-License-Identifier: Apache-2.0
#include "mmt/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <fstream>
#include <iterator>

#include "mmt/error.hpp"

namespace mmt {

using nlohmann::json;

namespace {

std::string pool_gate_name(PoolGate g) { return g == PoolGate::Identity ? "identity" : "sigmoid"; }

PoolGate pool_gate_from(const std::string& s) {
  if (s == "sigmoid") return PoolGate::Sigmoid;
  if (s == "identity") return PoolGate::Identity;
  throw ConfigError("unknown pool_gate '" + s + "'");
}

void put_le(std::vector<unsigned char>& out, float v) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<unsigned char>((bits >> (8 * k)) & 0xffu));
}

float get_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(p[k]) << (8 * k);
  return std::bit_cast<float>(bits);
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

}  // namespace

json to_json(const ModelConfig& cfg) {
  return {{"segments", {{"i_end", cfg.segments.i_end}, {"h_end", cfg.segments.h_end}, {"width", cfg.segments.width}}},
          {"d", cfg.embedding_dim},
          {"n_c", cfg.n_c},
          {"n_u", cfg.n_u},
          {"n_v", cfg.n_v},
          {"multimodal", cfg.multimodal},
          {"fmt", cfg.fmt},
          {"pool_gate", pool_gate_name(cfg.pool_gate)},
          {"feedback", to_string(cfg.feedback)},
          {"dropout", cfg.dropout},
          {"context_bias", cfg.loss.context_bias_enabled},
          {"attenuation", cfg.loss.attenuation_enabled},
          {"n_item_neg", cfg.loss.n_item_neg},
          {"n_ctx_neg", cfg.loss.n_ctx_neg},
          {"curriculum_l2", cfg.loss.curriculum_l2}};
}

ModelConfig model_config_from_json(const json& j, ModelConfig cfg) {
  if (!j.is_object()) throw ConfigError("model config must be an object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "segments") {
        cfg.segments.i_end = v.at("i_end").get<std::size_t>();
        cfg.segments.h_end = v.at("h_end").get<std::size_t>();
        cfg.segments.width = v.at("width").get<std::size_t>();
      } else if (key == "d") {
        cfg.embedding_dim = v.get<std::size_t>();
      } else if (key == "n_c") {
        cfg.n_c = v.get<std::size_t>();
      } else if (key == "n_u") {
        cfg.n_u = v.get<std::size_t>();
      } else if (key == "n_v") {
        cfg.n_v = v.get<std::size_t>();
      } else if (key == "multimodal") {
        cfg.multimodal = v.get<bool>();
      } else if (key == "fmt") {
        cfg.fmt = v.get<bool>();
      } else if (key == "pool_gate") {
        cfg.pool_gate = pool_gate_from(v.get<std::string>());
      } else if (key == "feedback") {
        cfg.feedback = feedback_from_string(v.get<std::string>());
      } else if (key == "dropout") {
        cfg.dropout = v.get<double>();
      } else if (key == "context_bias") {
        cfg.loss.context_bias_enabled = v.get<bool>();
      } else if (key == "attenuation") {
        cfg.loss.attenuation_enabled = v.get<bool>();
      } else if (key == "n_item_neg") {
        cfg.loss.n_item_neg = v.get<std::size_t>();
      } else if (key == "n_ctx_neg") {
        cfg.loss.n_ctx_neg = v.get<std::size_t>();
      } else if (key == "curriculum_l2") {
        cfg.loss.curriculum_l2 = v.get<double>();
      } else {
        throw ConfigError("unknown model key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return cfg;
}

std::string sha256_hex(std::span<const unsigned char> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw CheckpointError("SHA-256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::vector<unsigned char> parameter_bytes(const ParameterStore<float>& store, std::string_view prefix) {
  std::vector<unsigned char> out;
  for (const auto& [name, p] : store) {
    if (!has_prefix(name, prefix)) continue;
    for (float v : p.value.values()) put_le(out, v);
  }
  return out;
}

std::string parameter_hash(const ParameterStore<float>& store, std::string_view prefix) {
  return sha256_hex(parameter_bytes(store, prefix));
}

void save_checkpoint(const MmtModel<float>& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json entries = json::array();
  std::size_t offset = 0;
  for (const auto& [name, p] : model.store) {
    entries.push_back({{"name", name}, {"shape", p.value.shape()}, {"offset", offset}, {"trainable", p.trainable}});
    offset += 4 * p.value.size();
  }
  const auto blob = parameter_bytes(model.store);
  json manifest = {{"format_version", kCheckpointFormat},
                   {"model", to_json(model.config)},
                   {"entries", entries},
                   {"domains", model.domains()},
                   {"blob_bytes", blob.size()},
                   {"sha256", sha256_hex(blob)}};
  {
    std::ofstream out(dir / "params.bin", std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
    if (!out) throw CheckpointError("cannot write " + (dir / "params.bin").string());
  }
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  out << manifest.dump(2) << "\n";
  if (!out) throw CheckpointError("cannot write " + (dir / "manifest.json").string());
}

MmtModel<float> load_checkpoint(const std::filesystem::path& dir) {
  const json manifest = read_json(dir / "manifest.json");
  std::ifstream in(dir / "params.bin", std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + (dir / "params.bin").string());
  const std::vector<unsigned char> blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  MmtModel<float> model;
  try {
    const int version = manifest.at("format_version").get<int>();
    if (version != kCheckpointFormat) {
      throw CheckpointError("unsupported checkpoint format " + std::to_string(version));
    }
    if (sha256_hex(blob) != manifest.at("sha256").get<std::string>()) {
      throw CheckpointError("params.bin does not match the manifest hash");
    }
    model.config = model_config_from_json(manifest.at("model"));
    std::string prev;
    for (const auto& e : manifest.at("entries")) {
      const auto name = e.at("name").get<std::string>();
      if (!prev.empty() && name <= prev) throw CheckpointError("entries out of order at '" + name + "'");
      prev = name;
      const auto shape = e.at("shape").get<std::vector<std::size_t>>();
      const auto offset = e.at("offset").get<std::size_t>();
      std::size_t n = 1;
      for (auto s : shape) n *= s;
      if (offset + 4 * n > blob.size()) throw CheckpointError("entry '" + name + "' overruns params.bin");
      Tensor<float> t(shape);
      for (std::size_t i = 0; i < n; ++i) t[i] = get_le(blob.data() + offset + 4 * i);
      auto& p = model.store.add(name, std::move(t));
      p.trainable = e.value("trainable", true);
    }
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("manifest: ") + e.what());
  }
  return model;
}

std::string checkpoint_hash(const std::filesystem::path& dir) {
  try {
    return read_json(dir / "manifest.json").at("sha256").get<std::string>();
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("manifest: ") + e.what());
  }
}

}  // namespace mmt
