#include <hsd/errors.hpp>
#include <hsd/pipeline.hpp>

namespace hsd {

std::map<std::string, HistorySet> history_map(std::span<const HistorySet> histories) {
  std::map<std::string, HistorySet> out;
  for (const HistorySet& h : histories) {
    HistorySet& dst = out[h.user_id];
    dst.user_id = h.user_id;
    dst.posts.insert(dst.posts.end(), h.posts.begin(), h.posts.end());
  }
  return out;
}

std::vector<Post> effective_pool(const SynthCorpus& corpus) {
  if (!corpus.pool.empty()) return corpus.pool;
  std::vector<Post> pool = corpus.train.posts;
  for (Post& p : pool) p.label.reset();
  return pool;
}

Resources corpus_resources(const SynthCorpus& corpus, const std::vector<Post>& pool,
                           const std::optional<std::filesystem::path>& embedding_file) {
  std::vector<Post> text = corpus.train.posts;
  for (const HistorySet& h : corpus.histories) text.insert(text.end(), h.posts.begin(), h.posts.end());
  text.insert(text.end(), pool.begin(), pool.end());
  return prepare_resources(text, embedding_file);
}

std::vector<Post> all_targets(const SynthCorpus& corpus) {
  std::vector<Post> targets = corpus.train.posts;
  targets.insert(targets.end(), corpus.test.posts.begin(), corpus.test.posts.end());
  return targets;
}

Experiment prepare_experiment(const SynthCorpus& corpus, const TrainConfig& config, bool with_index,
                              const std::optional<std::filesystem::path>& embedding_file) {
  config.validate();
  Experiment exp;
  exp.pool = effective_pool(corpus);
  exp.resources = corpus_resources(corpus, exp.pool, embedding_file);
  const TextEncoder enc = exp.resources.encoder();

  exp.pretrained = init_model(config.seed);
  exp.pretrain = pretrain_baseline(exp.pretrained, corpus.train, enc, config);
  install_intra_encoder(exp.pretrained);

  if (with_index) exp.index = lsh::LshIndex::build(exp.pool, config.seed);
  exp.cache = precompute(exp.pretrained, all_targets(corpus), history_map(corpus.histories), exp.index ? &*exp.index : nullptr,
                         enc, config);
  return exp;
}

ModelParams initial_model(const Experiment& exp, const TrainConfig& config) {
  ModelParams model = exp.pretrained;
  if (config.warm_start) {
    if (config.mode != Mode::Baseline) warm_start_heads(model);
    return model;
  }
  ModelParams fresh = init_model(config.seed);
  fresh.branches.f_ia = model.branches.f_ia;
  fresh.branches.l_ia = model.branches.l_ia;
  return fresh;
}

ModeRun run_mode(const Experiment& exp, const SynthCorpus& corpus, const TrainConfig& config) {
  if (uses_inter(config.mode) && !exp.index) {
    throw Error(ErrorCode::InvalidArgument, "mode " + std::string(to_string(config.mode)) + " needs a neighbor index");
  }
  const TextEncoder enc = exp.resources.encoder();
  const PoolView pool(exp.pool);
  ModeRun run;
  run.model = initial_model(exp, config);
  run.result = train_epochs(run.model, corpus.train, exp.cache, pool, enc, config);
  run.test_predictions = predict_all(run.model, corpus.test.posts, exp.cache, pool, enc, config);
  return run;
}

std::vector<int> labels_of(std::span<const Prediction> preds) {
  std::vector<int> out;
  out.reserve(preds.size());
  for (const Prediction& p : preds) out.push_back(p.label());
  return out;
}

std::vector<int> labels_of(std::span<const Post> posts) {
  std::vector<int> out;
  out.reserve(posts.size());
  for (const Post& p : posts) {
    if (!p.label) throw Error(ErrorCode::InvalidArgument, "post " + p.id + " has no label");
    out.push_back(*p.label);
  }
  return out;
}

}  // namespace hsd
