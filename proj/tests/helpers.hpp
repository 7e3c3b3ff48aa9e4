// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "mmt/data.hpp"
#include "mmt/model.hpp"
#include "mmt/synth.hpp"

namespace mmt::test {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("mmt_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

inline DomainManifest manifest(std::size_t width, const std::string& id = "toy",
                               Feedback fb = Feedback::Implicit) {
  DomainManifest m;
  m.domain_id = id;
  m.feedback = fb;
  m.segments = {width / 3, 2 * width / 3, width};
  for (std::size_t f = 0; f < width; ++f) {
    Segment s = f < m.segments.i_end   ? Segment::Interactional
                : f < m.segments.h_end ? Segment::Historical
                                       : Segment::Attributional;
    m.features.push_back({"f" + std::to_string(f), s, {}});
  }
  return m;
}

/// Dataset built in memory; every interaction starts in the train split.
inline DomainDataset dataset(const std::string& id, std::size_t n_users, std::size_t n_items,
                             std::size_t width, Feedback fb, std::vector<Interaction> rows) {
  DomainDataset ds;
  ds.domain_id = id;
  ds.n_users = n_users;
  ds.n_items = n_items;
  ds.feedback = fb;
  ds.segments = {width / 3, 2 * width / 3, width};
  ds.features = manifest(width, id, fb).features;
  ds.interactions = std::move(rows);
  for (std::size_t i = 0; i < ds.interactions.size(); ++i) ds.splits.train.push_back(i);
  return ds;
}

/// Random dataset with contexts in [0, 1), split 80/10/10.
inline DomainDataset random_dataset(const std::string& id, std::size_t n_users, std::size_t n_items,
                                    std::size_t width, std::size_t n, Feedback fb, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<Interaction> rows;
  for (std::size_t i = 0; i < n; ++i) {
    Interaction t;
    t.user = static_cast<int>(i % n_users);
    t.item = static_cast<int>(rng() % n_items);
    for (std::size_t f = 0; f < width; ++f) t.context.push_back(u(rng));
    if (fb == Feedback::Explicit) t.rating = 1.0f + 4.0f * u(rng);
    rows.push_back(std::move(t));
  }
  return split(dataset(id, n_users, n_items, width, fb, std::move(rows)), seed);
}

/// A small synthetic source plus targets sharing one rule.
inline SynthConfig small_synth(Feedback fb = Feedback::Explicit, std::uint64_t seed = 1) {
  SynthConfig sc;
  sc.n_domains = 2;
  sc.users_per_domain = {60, 30};
  sc.items_per_domain = {30, 20};
  sc.interactions_per_domain = {1200, 400};
  sc.context_width = 6;
  sc.i_end = 2;
  sc.h_end = 4;
  sc.n_monomials = 4;
  sc.feedback = fb;
  sc.seed = seed;
  return sc;
}

inline ModelConfig small_model(const DomainDataset& ds, std::size_t d = 8) {
  ModelConfig mc;
  mc.segments = ds.segments;
  mc.embedding_dim = d;
  mc.feedback = ds.feedback;
  mc.dropout = 0.0;
  return mc;
}

template <typename T>
CandidateBatch<T> batch_of(const DomainDataset& ds, const std::vector<std::size_t>& idx) {
  CandidateBatch<T> b(ds.context_width());
  for (std::size_t i : idx) b.push(ds.interactions[i]);
  return b;
}

inline std::vector<std::size_t> all_indices(const DomainDataset& ds) {
  std::vector<std::size_t> out(ds.interactions.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
  return out;
}

}  // namespace mmt::test
