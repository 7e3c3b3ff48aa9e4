// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace mmt {

enum class Feedback { Implicit, Explicit };

std::string to_string(Feedback f);
Feedback feedback_from_string(const std::string& s);

enum class Segment { Interactional, Historical, Attributional };

std::string to_string(Segment s);
Segment segment_from_string(const std::string& s);

/// Boundaries splitting a context of `width` features into c_I = [0, i_end),
/// c_H = [i_end, h_end) and c_A = [h_end, width).
struct ContextSegments {
  std::size_t i_end = 0;
  std::size_t h_end = 0;
  std::size_t width = 0;

  void validate() const;
  std::size_t interactional() const { return i_end; }
  std::size_t historical() const { return h_end - i_end; }
  std::size_t attributional() const { return width - h_end; }
  bool operator==(const ContextSegments&) const = default;
};

struct ContextVector {
  std::vector<float> values;
  ContextSegments segments;
};

struct Interaction {
  int user = 0;
  int item = 0;
  std::vector<float> context;
  std::optional<float> rating;
};

/// How one feature was normalized; kept so val/test and later loads can be
/// mapped with the same statistics.
struct NormalizationRecord {
  std::string method = "none";
  double min = 0.0;
  double max = 0.0;
  std::vector<double> cut_points;
  /// Non-train values outside [0, 1] after minmax are kept, not clamped.
  std::size_t out_of_range = 0;
};

struct FeatureMeta {
  std::string name;
  Segment segment = Segment::Interactional;
  NormalizationRecord normalization;
};

struct Splits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

/// Interactions of one recommendation domain with dense, domain-local ids.
/// `user_keys[i]` / `item_keys[i]` hold the external id behind local id i;
/// external ids of different domains never overlap.
struct DomainDataset {
  std::string domain_id;
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  Feedback feedback = Feedback::Implicit;
  ContextSegments segments;
  std::vector<FeatureMeta> features;
  std::vector<Interaction> interactions;
  Splits splits;
  std::vector<std::int64_t> user_keys;
  std::vector<std::int64_t> item_keys;

  std::size_t context_width() const { return segments.width; }
  /// Throws if ids, context widths, ratings or splits break the dataset invariants.
  void validate() const;
  double mean_train_rating() const;
};

/// On-disk description of a domain, stored next to its interactions.
struct DomainManifest {
  std::string domain_id;
  Feedback feedback = Feedback::Implicit;
  ContextSegments segments;
  std::vector<FeatureMeta> features;
};

DomainManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DomainManifest& manifest, const std::filesystem::path& path);
DomainManifest manifest_of(const DomainDataset& ds);

/// Reads one JSON object per line: {"u": int, "v": int, "c": [float...], "r": float?}.
/// Users and items below the count thresholds are removed repeatedly until no
/// further removal happens, then ids are remapped densely in key order. All
/// interactions start in the train split.
DomainDataset ingest_jsonl(const std::filesystem::path& path, const DomainManifest& schema,
                           Feedback feedback, std::size_t min_user_count,
                           std::size_t min_item_count);

void write_jsonl(const DomainDataset& ds, const std::filesystem::path& path);

struct NormalizationMethod {
  enum class Kind { None, MinMax, QuantileBins } kind = Kind::MinMax;
  std::size_t bins = 0;

  static NormalizationMethod none() { return {Kind::None, 0}; }
  static NormalizationMethod minmax() { return {Kind::MinMax, 0}; }
  static NormalizationMethod quantile_bins(std::size_t k) { return {Kind::QuantileBins, k}; }
  static NormalizationMethod parse(const std::string& s);
};

/// Statistics come from the train split and are applied to every split.
DomainDataset normalize(DomainDataset ds, const std::vector<NormalizationMethod>& per_feature);
DomainDataset normalize(DomainDataset ds, NormalizationMethod method);

/// Seeded uniform permutation, then contiguous train/validation/test blocks.
DomainDataset split(DomainDataset ds, std::array<double, 3> fractions, std::uint64_t seed);
inline DomainDataset split(DomainDataset ds, std::uint64_t seed) {
  return split(std::move(ds), {0.8, 0.1, 0.1}, seed);
}

/// A corrupted copy of a positive: same user, `item` replaced for item
/// negatives, context borrowed from interaction `context_source` for context
/// negatives (for item negatives context_source is the positive itself).
struct NegativeRef {
  int user = 0;
  int item = 0;
  std::size_t context_source = 0;
};

/// Item negatives draw v- uniformly from all items except the positive's;
/// context negatives borrow the context of a uniformly random other train
/// interaction whose context is not bitwise equal to the positive's.
std::vector<NegativeRef> draw_negatives(const DomainDataset& ds, std::size_t positive_index,
                                        std::size_t n_item_neg, std::size_t n_ctx_neg,
                                        std::mt19937_64& rng);

std::vector<Interaction> sample_negatives(const DomainDataset& ds, std::size_t positive_index,
                                          std::size_t n_item_neg, std::size_t n_ctx_neg,
                                          std::mt19937_64& rng);

/// Zeroes ceil(fraction * |C|) randomly chosen features of every interaction.
DomainDataset context_drop(DomainDataset ds, double fraction, std::uint64_t seed);

}  // namespace mmt
