#pragma once

#include <hsd/synthetic.hpp>
#include <hsd/trainer.hpp>

#include <optional>

namespace hsd {

std::map<std::string, HistorySet> history_map(std::span<const HistorySet> histories);

/// The corpus pool, or the training posts with labels removed when the corpus
/// ships without one.
std::vector<Post> effective_pool(const SynthCorpus& corpus);

/// Vocabulary over training, history and pool text (never test text), with
/// word vectors from `embedding_file` or hashed ones.
Resources corpus_resources(const SynthCorpus& corpus, const std::vector<Post>& pool,
                           const std::optional<std::filesystem::path>& embedding_file = std::nullopt);

/// Train then test posts: every post that gets a cache entry.
std::vector<Post> all_targets(const SynthCorpus& corpus);

/// Everything shared by the modes of one seed: vocabulary, the pretrained
/// baseline, the neighbor index and the per-target cache.
struct Experiment {
  Resources resources;
  std::vector<Post> pool;
  ModelParams pretrained;
  PretrainResult pretrain;
  std::optional<lsh::LshIndex> index;
  PrecomputeCache cache;
};

/// Pretrains the baseline and precomputes neighbor sets (when `with_index`)
/// and history summaries for every train and test target.
Experiment prepare_experiment(const SynthCorpus& corpus, const TrainConfig& config, bool with_index,
                              const std::optional<std::filesystem::path>& embedding_file = std::nullopt);

/// Starting point for `config.mode`: the pretrained weights, with pass-through
/// fusion heads when warm starting, or fresh weights (keeping the frozen
/// history encoder) otherwise.
ModelParams initial_model(const Experiment& exp, const TrainConfig& config);

struct ModeRun {
  ModelParams model;
  TrainResult result;
  std::vector<Prediction> test_predictions;
};

ModeRun run_mode(const Experiment& exp, const SynthCorpus& corpus, const TrainConfig& config);

std::vector<int> labels_of(std::span<const Prediction> preds);
std::vector<int> labels_of(std::span<const Post> posts);

}  // namespace hsd
