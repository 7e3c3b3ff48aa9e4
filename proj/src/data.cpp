// SPDX-License-Identifier: Apache-2.0
#include "mmt/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "json.hpp"

#include "mmt/error.hpp"

namespace mmt {

using nlohmann::json;

std::string to_string(Feedback f) { return f == Feedback::Implicit ? "implicit" : "explicit"; }

Feedback feedback_from_string(const std::string& s) {
  if (s == "implicit") return Feedback::Implicit;
  if (s == "explicit") return Feedback::Explicit;
  throw ConfigError("unknown feedback mode '" + s + "'");
}

std::string to_string(Segment s) {
  switch (s) {
    case Segment::Interactional: return "interactional";
    case Segment::Historical: return "historical";
    case Segment::Attributional: return "attributional";
  }
  return "?";
}

Segment segment_from_string(const std::string& s) {
  if (s == "interactional" || s == "I") return Segment::Interactional;
  if (s == "historical" || s == "H") return Segment::Historical;
  if (s == "attributional" || s == "A") return Segment::Attributional;
  throw SchemaError("unknown context segment '" + s + "'");
}

void ContextSegments::validate() const {
  if (!(i_end <= h_end && h_end <= width)) {
    throw SchemaError("context segments must satisfy 0 <= i_end <= h_end <= |C|, got i_end=" +
                      std::to_string(i_end) + " h_end=" + std::to_string(h_end) +
                      " |C|=" + std::to_string(width));
  }
}

void DomainDataset::validate() const {
  segments.validate();
  for (std::size_t i = 0; i < interactions.size(); ++i) {
    const auto& t = interactions[i];
    if (t.user < 0 || static_cast<std::size_t>(t.user) >= n_users || t.item < 0 ||
        static_cast<std::size_t>(t.item) >= n_items) {
      throw SchemaError(domain_id + ": interaction " + std::to_string(i) + " has id out of range");
    }
    if (t.context.size() != segments.width) {
      throw SchemaError(domain_id + ": interaction " + std::to_string(i) + " context width " +
                        std::to_string(t.context.size()) + " != " + std::to_string(segments.width));
    }
    if (t.rating.has_value() != (feedback == Feedback::Explicit)) {
      throw SchemaError(domain_id + ": rating presence does not match feedback mode");
    }
  }
  std::vector<char> seen(interactions.size(), 0);
  for (const auto* part : {&splits.train, &splits.validation, &splits.test}) {
    for (std::size_t i : *part) {
      if (i >= interactions.size() || seen[i]) {
        throw SplitError(domain_id + ": splits overlap or reference missing interactions");
      }
      seen[i] = 1;
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw SplitError(domain_id + ": splits do not cover every interaction");
  }
}

double DomainDataset::mean_train_rating() const {
  if (feedback != Feedback::Explicit || splits.train.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i : splits.train) acc += *interactions[i].rating;
  return acc / static_cast<double>(splits.train.size());
}

DomainManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open manifest " + path.string());
  json j;
  try {
    in >> j;
    DomainManifest m;
    m.domain_id = j.at("domain_id").get<std::string>();
    m.feedback = feedback_from_string(j.at("feedback").get<std::string>());
    for (const auto& f : j.at("features")) {
      FeatureMeta meta;
      meta.name = f.at("name").get<std::string>();
      meta.segment = segment_from_string(f.at("segment").get<std::string>());
      m.features.push_back(std::move(meta));
    }
    m.segments.i_end = j.at("segments").at("i_end").get<std::size_t>();
    m.segments.h_end = j.at("segments").at("h_end").get<std::size_t>();
    m.segments.width = m.features.size();
    m.segments.validate();
    return m;
  } catch (const json::exception& e) {
    throw ParseError("manifest " + path.string() + ": " + e.what());
  }
}

void write_manifest(const DomainManifest& m, const std::filesystem::path& path) {
  json j;
  j["domain_id"] = m.domain_id;
  j["feedback"] = to_string(m.feedback);
  j["segments"] = {{"i_end", m.segments.i_end}, {"h_end", m.segments.h_end}};
  j["features"] = json::array();
  for (const auto& f : m.features) {
    j["features"].push_back({{"name", f.name}, {"segment", to_string(f.segment)}});
  }
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write manifest " + path.string());
  out << j.dump(2) << "\n";
}

DomainManifest manifest_of(const DomainDataset& ds) {
  return {ds.domain_id, ds.feedback, ds.segments, ds.features};
}

namespace {

struct RawRecord {
  std::int64_t user;
  std::int64_t item;
  std::vector<float> context;
  std::optional<float> rating;
};

}  // namespace

DomainDataset ingest_jsonl(const std::filesystem::path& path, const DomainManifest& schema,
                           Feedback feedback, std::size_t min_user_count,
                           std::size_t min_item_count) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  const std::size_t width = schema.features.size();

  std::vector<RawRecord> raw;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    RawRecord rec;
    try {
      const json j = json::parse(line);
      rec.user = j.at("u").get<std::int64_t>();
      rec.item = j.at("v").get<std::int64_t>();
      rec.context = j.at("c").get<std::vector<float>>();
      if (feedback == Feedback::Explicit) {
        if (!j.contains("r")) {
          throw SchemaError(path.string() + ":" + std::to_string(line_no) +
                            ": explicit feedback requires a rating");
        }
        rec.rating = j.at("r").get<float>();
      }
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (rec.context.size() != width) {
      throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": context has " +
                        std::to_string(rec.context.size()) + " features, schema declares " +
                        std::to_string(width));
    }
    raw.push_back(std::move(rec));
  }

  // Filter to a fixpoint: dropping a user can push an item below threshold.
  std::vector<char> alive(raw.size(), 1);
  for (bool changed = true; changed;) {
    changed = false;
    std::map<std::int64_t, std::size_t> ucount, icount;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (!alive[i]) continue;
      ++ucount[raw[i].user];
      ++icount[raw[i].item];
    }
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (alive[i] && (ucount[raw[i].user] < min_user_count || icount[raw[i].item] < min_item_count)) {
        alive[i] = 0;
        changed = true;
      }
    }
  }

  std::set<std::int64_t> users, items;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (alive[i]) {
      users.insert(raw[i].user);
      items.insert(raw[i].item);
    }
  }
  DomainDataset ds;
  ds.domain_id = schema.domain_id;
  ds.feedback = feedback;
  ds.segments = schema.segments;
  ds.segments.width = width;
  ds.features = schema.features;
  ds.user_keys.assign(users.begin(), users.end());
  ds.item_keys.assign(items.begin(), items.end());
  ds.n_users = users.size();
  ds.n_items = items.size();
  std::map<std::int64_t, int> umap, imap;
  for (std::size_t i = 0; i < ds.user_keys.size(); ++i) umap[ds.user_keys[i]] = static_cast<int>(i);
  for (std::size_t i = 0; i < ds.item_keys.size(); ++i) imap[ds.item_keys[i]] = static_cast<int>(i);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!alive[i]) continue;
    ds.interactions.push_back(
        {umap[raw[i].user], imap[raw[i].item], std::move(raw[i].context), raw[i].rating});
  }
  for (auto& f : ds.features) f.normalization = NormalizationRecord{};
  ds.splits.train.resize(ds.interactions.size());
  std::iota(ds.splits.train.begin(), ds.splits.train.end(), std::size_t{0});
  ds.validate();
  return ds;
}

void write_jsonl(const DomainDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  for (const auto& t : ds.interactions) {
    json j;
    j["u"] = ds.user_keys.empty() ? t.user : ds.user_keys[static_cast<std::size_t>(t.user)];
    j["v"] = ds.item_keys.empty() ? t.item : ds.item_keys[static_cast<std::size_t>(t.item)];
    j["c"] = t.context;
    if (t.rating) j["r"] = *t.rating;
    out << j.dump() << "\n";
  }
}

NormalizationMethod NormalizationMethod::parse(const std::string& s) {
  if (s == "none") return none();
  if (s == "minmax") return minmax();
  const std::string prefix = "quantile:";
  if (s.rfind(prefix, 0) == 0) return quantile_bins(std::stoul(s.substr(prefix.size())));
  throw ConfigError("unknown normalization '" + s + "' (expected none, minmax or quantile:<k>)");
}

DomainDataset normalize(DomainDataset ds, NormalizationMethod method) {
  const std::vector<NormalizationMethod> per_feature(ds.context_width(), method);
  return normalize(std::move(ds), per_feature);
}

DomainDataset normalize(DomainDataset ds, const std::vector<NormalizationMethod>& per_feature) {
  const std::size_t width = ds.context_width();
  if (per_feature.size() != width) {
    throw ConfigError("normalize: need one method per feature");
  }
  if (ds.splits.train.empty()) throw ConfigError("normalize: train split is empty");
  if (ds.features.size() != width) ds.features.resize(width);
  std::vector<char> in_train(ds.interactions.size(), 0);
  for (std::size_t i : ds.splits.train) in_train[i] = 1;

  for (std::size_t f = 0; f < width; ++f) {
    const auto& m = per_feature[f];
    NormalizationRecord rec;
    if (m.kind == NormalizationMethod::Kind::None) {
      ds.features[f].normalization = rec;
      continue;
    }
    std::vector<double> train_vals;
    train_vals.reserve(ds.splits.train.size());
    for (std::size_t i : ds.splits.train) train_vals.push_back(ds.interactions[i].context[f]);

    if (m.kind == NormalizationMethod::Kind::MinMax) {
      rec.method = "minmax";
      const auto [lo, hi] = std::minmax_element(train_vals.begin(), train_vals.end());
      rec.min = *lo;
      rec.max = *hi;
      const double span = rec.max - rec.min;
      for (std::size_t i = 0; i < ds.interactions.size(); ++i) {
        float& x = ds.interactions[i].context[f];
        const double y = span > 0.0 ? (x - rec.min) / span : 0.0;
        if (!in_train[i] && (y < 0.0 || y > 1.0)) ++rec.out_of_range;
        x = static_cast<float>(y);
      }
    } else {
      if (m.bins < 2) throw ConfigError("quantile binning needs k >= 2");
      rec.method = "quantile_bins";
      std::sort(train_vals.begin(), train_vals.end());
      const std::size_t n = train_vals.size();
      for (std::size_t j = 1; j < m.bins; ++j) rec.cut_points.push_back(train_vals[j * n / m.bins]);
      const double denom = static_cast<double>(m.bins - 1);
      for (auto& t : ds.interactions) {
        float& x = t.context[f];
        const auto bin = std::upper_bound(rec.cut_points.begin(), rec.cut_points.end(),
                                          static_cast<double>(x)) -
                         rec.cut_points.begin();
        x = static_cast<float>(static_cast<double>(bin) / denom);
      }
    }
    ds.features[f].normalization = std::move(rec);
  }
  return ds;
}

DomainDataset split(DomainDataset ds, std::array<double, 3> fractions, std::uint64_t seed) {
  const double total = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(total - 1.0) > 1e-9 || fractions[0] < 0 || fractions[1] < 0 || fractions[2] < 0) {
    throw ConfigError("split fractions must be non-negative and sum to 1");
  }
  const std::size_t n = ds.interactions.size();
  if (n < 3) throw SplitError(ds.domain_id + ": need at least 3 interactions to split");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n)));
  const auto n_val = std::min<std::size_t>(
      n - n_train, static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n))));
  ds.splits.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  ds.splits.validation.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                              perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  ds.splits.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
  return ds;
}

namespace {

bool same_bits(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

constexpr int kMaxRejections = 100;

}  // namespace

std::vector<NegativeRef> draw_negatives(const DomainDataset& ds, std::size_t positive_index,
                                        std::size_t n_item_neg, std::size_t n_ctx_neg,
                                        std::mt19937_64& rng) {
  const Interaction& pos = ds.interactions.at(positive_index);
  std::vector<NegativeRef> out;
  out.reserve(n_item_neg + n_ctx_neg);
  if (n_item_neg > 0) {
    if (ds.n_items < 2) throw SamplingError(ds.domain_id + ": item negatives need >= 2 items");
    std::uniform_int_distribution<int> pick(0, static_cast<int>(ds.n_items) - 1);
    for (std::size_t k = 0; k < n_item_neg; ++k) {
      int tries = 0;
      int v = pick(rng);
      while (v == pos.item) {
        if (++tries >= kMaxRejections) throw SamplingError("item negative rejection exhausted");
        v = pick(rng);
      }
      out.push_back({pos.user, v, positive_index});
    }
  }
  if (n_ctx_neg > 0) {
    const auto& pool = ds.splits.train;
    if (pool.size() < 2) throw SamplingError(ds.domain_id + ": context negatives need >= 2 train interactions");
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (std::size_t k = 0; k < n_ctx_neg; ++k) {
      int tries = 0;
      std::size_t j = pool[pick(rng)];
      while (j == positive_index || same_bits(ds.interactions[j].context, pos.context)) {
        if (++tries >= kMaxRejections) throw SamplingError("context negative rejection exhausted");
        j = pool[pick(rng)];
      }
      out.push_back({pos.user, pos.item, j});
    }
  }
  return out;
}

std::vector<Interaction> sample_negatives(const DomainDataset& ds, std::size_t positive_index,
                                          std::size_t n_item_neg, std::size_t n_ctx_neg,
                                          std::mt19937_64& rng) {
  std::vector<Interaction> out;
  for (const auto& ref : draw_negatives(ds, positive_index, n_item_neg, n_ctx_neg, rng)) {
    Interaction t;
    t.user = ref.user;
    t.item = ref.item;
    t.context = ds.interactions[ref.context_source].context;
    out.push_back(std::move(t));
  }
  return out;
}

DomainDataset context_drop(DomainDataset ds, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 0.5) throw ConfigError("context_drop fraction must lie in [0, 0.5]");
  const std::size_t width = ds.context_width();
  const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(width) - 1e-9));
  if (k == 0) return ds;
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(width);
  for (auto& t : ds.interactions) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Partial Fisher-Yates: the first k slots become a uniform k-subset.
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, width - 1);
      std::swap(idx[i], idx[pick(rng)]);
      t.context[idx[i]] = 0.0f;
    }
  }
  return ds;
}

}  // namespace mmt
