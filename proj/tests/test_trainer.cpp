#include <hsd/errors.hpp>
#include <hsd/metrics.hpp>
#include <hsd/pipeline.hpp>

#include <gtest/gtest.h>

#include <filesystem>

using namespace hsd;

namespace {

SynthCorpus small_corpus() {
  SynthConfig c = synth_preset("default");
  c.n_users = 24;
  c.posts_per_user = 6;
  c.history_size = 6;
  c.vocab_size = 60;
  c.min_length = 5;
  c.max_length = 8;
  c.test_fraction = 0.25;
  return gen_synthetic(c, 5);
}

TrainConfig small_config(Mode mode) {
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.epochs = 2;
  cfg.pretrain_epochs = 2;
  cfg.neighbors = 50;
  cfg.batch_size = 10;
  cfg.seed = 3;
  return cfg;
}

const SynthCorpus& corpus() {
  static const SynthCorpus c = small_corpus();
  return c;
}

const Experiment& experiment() {
  static const Experiment e = prepare_experiment(corpus(), small_config(Mode::IntraRl), true);
  return e;
}

bool same_values(const std::vector<Parameter*>& a, const std::vector<Parameter*>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k]->value != b[k]->value) return false;
  }
  return true;
}

}  // namespace

TEST(TrainConfig, JsonRoundTripAndValidation) {
  TrainConfig cfg;
  cfg.mode = Mode::IntraRandom;
  cfg.alpha = 3.5;
  cfg.neighbors = 200;
  cfg.train_l_ia = true;
  const TrainConfig back = TrainConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());
  EXPECT_EQ(TrainConfig{}.batch_size, 25);
  EXPECT_EQ(TrainConfig{}.max_history, 400u);
  cfg.neighbors = 75;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = TrainConfig{};
  cfg.epsilon = 1.2;
  EXPECT_THROW(cfg.validate(), Error);
  EXPECT_THROW(parse_mode("intra-magic"), Error);
  EXPECT_EQ(parse_mode(to_string(Mode::IntraRl)), Mode::IntraRl);
}

TEST(Pretrain, EmptyDatasetRejected) {
  ModelParams m = init_model(1);
  const Resources r = prepare_resources(corpus().train.posts, std::nullopt);
  try {
    pretrain_baseline(m, Dataset{}, r.encoder(), small_config(Mode::Baseline));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyCorpus);
  }
}

TEST(Pretrain, DeterministicAndLossDrops) {
  const Resources r = prepare_resources(corpus().train.posts, std::nullopt);
  TrainConfig cfg = small_config(Mode::Baseline);
  cfg.pretrain_epochs = 3;
  cfg.patience = 0;
  ModelParams a = init_model(cfg.seed), b = init_model(cfg.seed);
  const Scalar initial = baseline_loss(a, corpus().train.posts, r.encoder());
  const PretrainResult ra = pretrain_baseline(a, corpus().train, r.encoder(), cfg);
  const PretrainResult rb = pretrain_baseline(b, corpus().train, r.encoder(), cfg);
  EXPECT_EQ(ra.train_losses, rb.train_losses);
  EXPECT_LT(baseline_loss(a, corpus().train.posts, r.encoder()), initial);
}

TEST(Pretrain, SeparableCorpusReachesHighTrainF1) {
  SynthConfig c = synth_preset("default");
  c.ambiguous_rate = 0.0;
  c.near_duplicate_rate = 0.0;
  c.test_fraction = 0.0;
  const SynthCorpus sc = gen_synthetic(c, 8);
  ASSERT_EQ(sc.train.posts.size(), 2000u);
  const Resources r = prepare_resources(sc.train.posts, std::nullopt);
  TrainConfig cfg = small_config(Mode::Baseline);
  cfg.pretrain_epochs = 20;
  cfg.patience = 0;
  ModelParams m = init_model(cfg.seed);
  pretrain_baseline(m, sc.train, r.encoder(), cfg);
  const PoolView pool(sc.train.posts);
  PrecomputeCache cache;
  for (const Post& p : sc.train.posts) cache.entries[p.id] = CacheEntry{};
  const auto preds = predict_all(m, sc.train.posts, cache, pool, r.encoder(), cfg);
  EXPECT_GE(prf1(labels_of(preds), labels_of(sc.train.posts)).f1, 0.95);
}

TEST(Precompute, OneEntryPerTargetAndHalfForEmptyHistory) {
  const Experiment& e = experiment();
  EXPECT_EQ(e.cache.entries.size(), all_targets(corpus()).size());
  for (const auto& [id, entry] : e.cache.entries) EXPECT_EQ(entry.neighbors.size(), 50u) << id;

  const Post stranger = make_post("lonely", "nobody", "some words");
  const PrecomputeCache c = precompute(e.pretrained, std::span(&stranger, 1), history_map(corpus().histories),
                                       nullptr, e.resources.encoder(), small_config(Mode::Intra));
  EXPECT_EQ(c.at("lonely").r_ia, Vector::Constant(kRepDim, 0.5));
  EXPECT_EQ(c.at("lonely").summary.count, 0u);
}

TEST(Precompute, ReloadEqualsRecomputation) {
  const Experiment& e = experiment();
  const auto path = std::filesystem::temp_directory_path() / "hsd_cache_test.json";
  e.cache.save(path);
  EXPECT_TRUE(PrecomputeCache::load(path) == e.cache);
  const auto targets = all_targets(corpus());
  const PrecomputeCache again = precompute(e.pretrained, targets, history_map(corpus().histories), &*e.index,
                                           e.resources.encoder(), small_config(Mode::IntraRl));
  EXPECT_TRUE(again == e.cache);
}

TEST(Train, ZeroEpochsLeavesParametersUnchanged) {
  const Experiment& e = experiment();
  TrainConfig cfg = small_config(Mode::IntraRl);
  cfg.epochs = 0;
  ModelParams m = initial_model(e, cfg);
  ModelParams ref = initial_model(e, cfg);
  const PoolView pool(e.pool);
  train_epochs(m, corpus().train, e.cache, pool, e.resources.encoder(), cfg);
  EXPECT_TRUE(same_values(m.parameters(), ref.parameters()));
}

TEST(Train, PolicyUpdatePrecedesEncoderBackward) {
  const Experiment& e = experiment();
  TrainConfig cfg = small_config(Mode::IntraRl);
  cfg.epochs = 1;
  ModelParams m = initial_model(e, cfg);
  const PoolView pool(e.pool);
  std::vector<std::pair<std::string, std::string>> events;
  train_epochs(m, corpus().train, e.cache, pool, e.resources.encoder(), cfg,
               [&](std::string_view ev, const std::string& id) { events.emplace_back(ev, id); });
  int policy = 0, backward = 0, steps = 0;
  std::string pending;
  for (const auto& [ev, id] : events) {
    if (ev == "policy_update") {
      EXPECT_TRUE(pending.empty());
      pending = id;
      ++policy;
    } else if (ev == "encoder_backward") {
      EXPECT_EQ(id, pending);
      pending.clear();
      ++backward;
    } else if (ev == "encoder_step") {
      ++steps;
    }
  }
  EXPECT_GT(policy, 0);
  EXPECT_EQ(policy, backward);
  EXPECT_GT(steps, 0);
}

TEST(Train, FrozenEncoderAndCacheUntouched) {
  const Experiment& e = experiment();
  const TrainConfig cfg = small_config(Mode::IntraRl);
  ModelParams m = initial_model(e, cfg);
  const nn::BiLstm f_ia_before = m.branches.f_ia;
  const nn::Linear l_ia_before = m.branches.l_ia;
  const PrecomputeCache cache_before = e.cache;
  const PoolView pool(e.pool);
  train_epochs(m, corpus().train, e.cache, pool, e.resources.encoder(), cfg);
  nn::BiLstm copy = f_ia_before;
  nn::Linear l_copy = l_ia_before;
  EXPECT_TRUE(same_values(m.branches.f_ia.parameters(), copy.parameters()));
  EXPECT_TRUE(same_values(m.branches.l_ia.parameters(), l_copy.parameters()));
  EXPECT_TRUE(cache_before == e.cache);
}

TEST(Train, DeterministicAcrossRuns) {
  const Experiment& e = experiment();
  for (Mode mode : {Mode::Intra, Mode::IntraRandom, Mode::IntraRl}) {
    const TrainConfig cfg = small_config(mode);
    const ModeRun a = run_mode(e, corpus(), cfg);
    const ModeRun b = run_mode(e, corpus(), cfg);
    ASSERT_EQ(a.result.epochs.size(), b.result.epochs.size());
    for (std::size_t k = 0; k < a.result.epochs.size(); ++k) {
      EXPECT_EQ(a.result.epochs[k].to_json(), b.result.epochs[k].to_json());
    }
    for (std::size_t k = 0; k < a.test_predictions.size(); ++k) {
      EXPECT_EQ(a.test_predictions[k].dist, b.test_predictions[k].dist);
    }
  }
}

TEST(Predict, ModeContracts) {
  const Experiment& e = experiment();
  const PoolView pool(e.pool);
  const Post& target = corpus().test.posts.front();
  const CacheEntry& entry = e.cache.at(target.id);

  TrainConfig cfg = small_config(Mode::Baseline);
  ModelParams base = initial_model(e, cfg);
  const Prediction pb = predict(base, target, entry, pool, e.resources.encoder(), cfg);
  Graph g;
  const TargetEncoding t = encode_target(g, base.branches, e.resources.encoder().embed(target));
  EXPECT_LT((pb.dist - softmax(Vector(t.r_ta.value()))).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_TRUE(pb.trace.empty());

  cfg = small_config(Mode::IntraRl);
  ModelParams rl = initial_model(e, cfg);
  const Prediction p1 = predict(rl, target, entry, pool, e.resources.encoder(), cfg);
  const Prediction p2 = predict(rl, target, entry, pool, e.resources.encoder(), cfg);
  ASSERT_EQ(p1.trace.size(), static_cast<std::size_t>(cfg.steps));
  EXPECT_EQ(p1.dist, p2.dist);
  for (const StepRecord& s : p1.trace) EXPECT_FALSE(s.explored);
  EXPECT_NEAR(p1.dist.sum(), 1.0, 1e-12);
}

TEST(Checkpoint, ModelRoundTrip) {
  ModelParams a = init_model(4), b = init_model(5);
  b.assign(a.to_tensors());
  EXPECT_TRUE(same_values(a.parameters(), b.parameters()));
  TensorMap partial = a.to_tensors();
  partial.erase(partial.begin());
  EXPECT_THROW(b.assign(partial), Error);
}
