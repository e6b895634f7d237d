#pragma once

#include <hsd/textio.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace hsd::lsh {

/// Sorted, duplicate-free shingle strings.
using ShingleSet = std::vector<std::string>;
using Signature = std::vector<std::uint64_t>;

/// Token unigrams plus adjacent bigrams joined with '_'.
ShingleSet shingles(std::span<const std::string> tokens);

double jaccard(const ShingleSet& a, const ShingleSet& b);

struct LshParams {
  int num_hashes = 128;
  int bands = 16;
  int rows = 8;

  void validate() const;
};

Signature minhash_signature(const ShingleSet& set, std::uint64_t seed, int num_hashes = 128);

/// Fraction of equal slots; an unbiased estimate of Jaccard similarity.
double signature_agreement(const Signature& a, const Signature& b);

struct Neighbor {
  std::size_t pool_index = 0;
  std::string post_id;
  double similarity = 0.0;
  bool padded = false;
};

/// Neighbors of one target, best first (similarity desc, then post id).
struct NeighborSet {
  std::string target_id;
  std::vector<Neighbor> neighbors;

  std::size_t size() const { return neighbors.size(); }
  std::size_t padded_count() const;
};

class LshIndex {
 public:
  /// Throws DuplicateId on repeated post ids, EmptyShingles on empty posts.
  static LshIndex build(std::span<const Post> pool, std::uint64_t seed, LshParams params = {});

  /// Top-n pool posts by exact Jaccard among band collisions, excluding the
  /// target and everything written by its author. Shortfalls are filled with
  /// a uniform sample seeded by the index seed and the target id.
  NeighborSet query(const Post& target, int n) const;

  std::size_t size() const { return posts_.size(); }
  const Post& post(std::size_t i) const { return posts_[i]; }
  const std::vector<Post>& posts() const { return posts_; }
  std::uint64_t seed() const { return seed_; }
  const LshParams& params() const { return params_; }
  const Signature& signature(std::size_t i) const { return signatures_[i]; }

  /// Number of band buckets holding pool entry `i`.
  std::size_t bucket_memberships(std::size_t i) const;
  /// Pool indices colliding with `sig` in at least one band.
  std::vector<std::size_t> candidates(const Signature& sig) const;

  bool same_structure(const LshIndex& other) const;

  /// Versioned file with seed, params, post ids and signatures.
  void save(const std::filesystem::path& path) const;
  /// Restores an index saved over the same pool.
  static LshIndex load(const std::filesystem::path& path, std::span<const Post> pool);

 private:
  void insert_bands(std::size_t i);
  std::uint64_t band_key(const Signature& sig, int band) const;

  std::vector<Post> posts_;
  std::vector<ShingleSet> shingles_;
  std::vector<Signature> signatures_;
  std::vector<std::unordered_map<std::uint64_t, std::vector<std::uint32_t>>> bands_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::unordered_map<std::string, std::size_t> per_user_;
  std::uint64_t seed_ = 0;
  LshParams params_;
};

/// Exact full-scan oracle with the same exclusion and ordering rules.
NeighborSet brute_force_topk(std::span<const Post> pool, const Post& target, int n);

/// |approx ∩ exact| / |exact| by post id.
double recall(const NeighborSet& approx, const NeighborSet& exact);

}  // namespace hsd::lsh
