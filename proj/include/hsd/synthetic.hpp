#pragma once

#include <hsd/textio.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hsd {

/// Knobs for the synthetic corpus. Hate-persona users write hate posts at
/// `hate_rate_hate_user`; everyone else writes none. Non-ambiguous posts carry
/// one or two class lexicon words; ambiguous posts are neutral words only.
struct SynthConfig {
  int n_users = 200;
  int posts_per_user = 10;
  int vocab_size = 400;
  int lexicon_size = 20;
  double hate_user_fraction = 0.37;
  double hate_rate_hate_user = 0.9;
  double label_noise = 0.0;
  double near_duplicate_rate = 0.05;
  int cluster_size = 3;
  /// Fraction of each near-duplicate cluster that appends a class marker word;
  /// the rest are verbatim copies by other users.
  double cluster_marker_fraction = 1.0;
  double ambiguous_rate = 0.2;
  int history_size = 20;
  double history_signal_rate = 0.5;
  int min_length = 8;
  int max_length = 14;
  double decoration_rate = 0.1;
  double test_fraction = 0.15;

  void validate() const;
};

/// "default", "ambiguous" (persona-resolvable ambiguous posts, informative
/// histories) or "duplicate" (ambiguous posts resolvable only through their
/// planted near-duplicate clusters).
SynthConfig synth_preset(std::string_view name);

struct SynthCorpus {
  Dataset train;
  Dataset test;
  std::vector<HistorySet> histories;
  std::vector<Post> pool;
  std::vector<std::string> ambiguous_ids;
};

SynthCorpus gen_synthetic(const SynthConfig& config, std::uint64_t seed);

/// Writes train/test/history/pool .jsonl plus meta.json into `dir`.
void write_corpus(const std::filesystem::path& dir, const SynthCorpus& corpus);
SynthCorpus read_corpus(const std::filesystem::path& dir);

/// Neighbor-retrieval benchmark pool: `clusters` groups, each a seed post, an
/// exact copy by another user and near-variants (one word substituted).
/// Returns the pool and, per cluster, the seed post id and its exact copy id.
struct ClusterPool {
  std::vector<Post> posts;
  std::vector<std::pair<std::string, std::string>> seed_and_copy;
};
ClusterPool gen_cluster_pool(int clusters, int cluster_size, int post_length, std::uint64_t seed);

}  // namespace hsd
