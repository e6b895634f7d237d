#pragma once

#include <hsd/agent.hpp>
#include <hsd/branches.hpp>
#include <hsd/checkpoint.hpp>
#include <hsd/lsh.hpp>
#include <hsd/textio.hpp>

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace hsd {

enum class Mode { Baseline, Intra, IntraRandom, IntraRl };

std::string_view to_string(Mode mode);
/// "baseline", "intra", "intra-random" or "intra-rl".
Mode parse_mode(std::string_view name);
bool uses_inter(Mode mode);

struct TrainConfig {
  Mode mode = Mode::IntraRl;
  int epochs = 10;
  int pretrain_epochs = 10;
  int batch_size = 25;
  Scalar lr = 1e-3;
  Scalar lr_policy = 1e-3;
  int steps = 3;
  Scalar alpha = 2.0;
  Scalar epsilon = 0.1;
  Scalar epsilon_final = 0.01;
  int neighbors = 100;
  std::size_t max_history = kMaxHistory;
  std::uint64_t seed = 1;
  /// Start f_ta/l_ta from the pretrained baseline and the fusion heads from a
  /// pass-through of the baseline logits.
  bool warm_start = true;
  /// Keep l_ia trainable instead of folding it into the precomputed cache.
  bool train_l_ia = false;
  double validation_fraction = 0.1;
  /// Epochs without validation improvement before stopping; 0 disables.
  int patience = 5;
  Scalar clip_norm = optim::kDefaultClipNorm;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct ModelParams {
  BranchParams branches;
  PolicyParams policy;

  /// Every non-policy parameter (trainable or not).
  std::vector<Parameter*> encoder_parameters();
  std::vector<Parameter*> policy_parameters() { return policy.parameters(); }
  std::vector<Parameter*> parameters();

  TensorMap to_tensors();
  /// Copies values for every named parameter; throws ParseError on a missing
  /// name or a shape mismatch.
  void assign(const TensorMap& tensors);
};

ModelParams init_model(std::uint64_t seed);

/// Vocabulary and frozen word vectors shared by every branch.
struct Resources {
  Vocab vocab;
  EmbeddingTable embeddings;

  TextEncoder encoder() const { return {vocab, embeddings}; }
};

/// Builds the vocabulary over every given post; word vectors come from
/// `embedding_file` when present, hashed vectors otherwise.
Resources prepare_resources(std::span<const Post> corpus, const std::optional<std::filesystem::path>& embedding_file,
                            int min_count = kDefaultMinCount);

struct PretrainResult {
  std::vector<Scalar> train_losses;       // running mean per epoch
  std::vector<Scalar> validation_losses;  // empty without a held-out slice
  int best_epoch = 0;
};

/// Trains f_ta and l_ta on cross-entropy of softmax(r_ta) with Adam in
/// minibatches, early-stopping on a held-out slice of the training set.
PretrainResult pretrain_baseline(ModelParams& model, const Dataset& train, const TextEncoder& enc,
                                 const TrainConfig& config);

/// Mean cross-entropy of the baseline prediction softmax(r_ta).
Scalar baseline_loss(ModelParams& model, std::span<const Post> posts, const TextEncoder& enc);

struct CacheEntry {
  std::vector<lsh::Neighbor> neighbors;
  IntraSummary summary;
  Vector r_ia = Vector::Constant(kRepDim, 0.5);
};

struct PrecomputeCache {
  std::map<std::string, CacheEntry> entries;

  const CacheEntry& at(const std::string& id) const;
  void save(const std::filesystem::path& path) const;
  static PrecomputeCache load(const std::filesystem::path& path);
  friend bool operator==(const PrecomputeCache& a, const PrecomputeCache& b);
};

/// Makes f_ia a frozen copy of the current f_ta.
void install_intra_encoder(ModelParams& model);

/// Neighbor sets (when `index` is given) and intra-user summaries for every
/// target. Call after install_intra_encoder.
PrecomputeCache precompute(const ModelParams& model, std::span<const Post> targets,
                           const std::map<std::string, HistorySet>& histories, const lsh::LshIndex* index,
                           const TextEncoder& enc, const TrainConfig& config);

/// Fusion heads start as a pass-through of r_ta: identity on that slice and
/// zero elsewhere, so both y' and y initially equal the baseline prediction.
void warm_start_heads(ModelParams& model);

/// Id -> post lookup over the retrieval pool.
class PoolView {
 public:
  explicit PoolView(std::span<const Post> pool);
  const Post& at(const std::string& id) const;

 private:
  std::unordered_map<std::string, const Post*> by_id_;
};

struct StepRecord {
  int action = 0;
  std::string neighbor_id;
  Scalar log_prob = 0;
  bool explored = false;
  Vector prediction;
};

struct Prediction {
  std::string id;
  Vector dist;  // [p(non-hate), p(hate)]
  int label() const { return argmax(dist); }
  std::vector<StepRecord> trace;
};

struct EpochMetrics {
  int epoch = 0;
  Scalar train_loss = 0;
  Scalar mean_reward = 0;
  Scalar explore_rate = 0;
  Scalar epsilon = 0;
  std::optional<Scalar> validation_loss;
  nlohmann::json to_json() const;
};

struct TrainResult {
  std::vector<EpochMetrics> epochs;
  int best_epoch = 0;
};

/// Receives "policy_update", "encoder_backward" and "encoder_step" events,
/// with the target id (empty for encoder_step).
using TrainObserver = std::function<void(std::string_view event, const std::string& target)>;

/// Joint training: per target an episode of `steps` selections, a REINFORCE
/// step on the policy, then the supervised gradient of the final prediction;
/// encoder updates are applied once per minibatch.
TrainResult train_epochs(ModelParams& model, const Dataset& train, const PrecomputeCache& cache, const PoolView& pool,
                         const TextEncoder& enc, const TrainConfig& config, const TrainObserver& observer = {},
                         const std::function<void(const EpochMetrics&)>& on_epoch = {});

/// Greedy (epsilon = 0) prediction. Modes without the similar-post branch
/// return y' (intra) or softmax(r_ta) (baseline).
Prediction predict(ModelParams& model, const Post& target, const CacheEntry& entry, const PoolView& pool,
                   const TextEncoder& enc, const TrainConfig& config);

std::vector<Prediction> predict_all(ModelParams& model, std::span<const Post> targets, const PrecomputeCache& cache,
                                    const PoolView& pool, const TextEncoder& enc, const TrainConfig& config);

Scalar mean_loss(std::span<const Prediction> preds, std::span<const Post> gold);

}  // namespace hsd
