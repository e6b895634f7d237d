#include <hsd/errors.hpp>
#include <hsd/trainer.hpp>

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>

namespace hsd {

namespace {

// Independent RNG streams derived from the run seed.
constexpr std::uint64_t kPretrainStream = 0x5052455452414931ull;
constexpr std::uint64_t kTrainStream = 0x545241494e494e47ull;
constexpr std::uint64_t kRandomSelectStream = 0x52414e444f4d5345ull;
constexpr std::uint64_t kHeldOutStream = 0x48454c444f555421ull;

struct HeldOut {
  std::vector<const Post*> fit;
  std::vector<const Post*> validation;
};

// Pretraining and joint training hold out the same posts for a given seed.
HeldOut split_validation(std::span<const Post> posts, const TrainConfig& config) {
  nn::Rng rng(config.seed ^ kHeldOutStream);
  const double fraction = config.patience > 0 ? config.validation_fraction : 0.0;
  HeldOut h;
  std::vector<const Post*> all;
  for (const Post& p : posts) all.push_back(&p);
  std::shuffle(all.begin(), all.end(), rng);
  std::size_t n_val = 0;
  if (fraction > 0.0 && all.size() >= 10) {
    n_val = std::max<std::size_t>(1, static_cast<std::size_t>(fraction * static_cast<double>(all.size())));
  }
  h.validation.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_val));
  h.fit.assign(all.begin() + static_cast<std::ptrdiff_t>(n_val), all.end());
  // Training order is reshuffled every epoch; start from input order so the
  // split alone decides membership.
  std::sort(h.fit.begin(), h.fit.end());
  return h;
}

int label_of(const Post& p) {
  if (!p.label) throw Error(ErrorCode::InvalidArgument, "post " + p.id + " has no label");
  return *p.label;
}

std::vector<Matrix> snapshot(const std::vector<Parameter*>& params) {
  std::vector<Matrix> out;
  out.reserve(params.size());
  for (const Parameter* p : params) out.push_back(p->value);
  return out;
}

void restore(const std::vector<Parameter*>& params, const std::vector<Matrix>& values) {
  for (std::size_t k = 0; k < params.size(); ++k) params[k]->value = values[k];
}

void scale_grads(const std::vector<Parameter*>& params, Scalar k) {
  for (Parameter* p : params) {
    if (p->trainable && p->grad.size() > 0) p->grad *= k;
  }
}

std::vector<Parameter*> concat_params(std::initializer_list<std::vector<Parameter*>> groups) {
  std::vector<Parameter*> out;
  for (const auto& g : groups) out.insert(out.end(), g.begin(), g.end());
  return out;
}

enum class Selection { EpsilonGreedy, Uniform };

struct Episode {
  Var y;  // prediction the loss is taken on
  EpisodeTrace trace;
  std::vector<std::string> chosen_ids;
};

// Forward pass for one target in the given mode.
Episode run_episode(Graph& g, ModelParams& m, const Post& target, const CacheEntry& entry, const PoolView& pool,
                    const TextEncoder& enc, const TrainConfig& cfg, Selection selection, Scalar epsilon,
                    nn::Rng& rng) {
  BranchParams& b = m.branches;
  const Matrix t_emb = enc.embed(target);
  const TargetEncoding te = encode_target(g, b, t_emb);
  Episode ep;
  if (target.label) ep.trace.label = *target.label;
  if (cfg.mode == Mode::Baseline) {
    ep.y = ad::softmax(te.r_ta);
    ep.trace.prior = ep.trace.final = ep.y.value();
    return ep;
  }
  Var r_ia = cfg.train_l_ia ? intra_representation(g, b.l_ia, entry.summary) : g.constant(entry.r_ia);
  Var y_prior = predict_prior(g, b, te.r_ta, r_ia);
  ep.trace.prior = y_prior.value();
  if (cfg.mode == Mode::Intra) {
    ep.y = y_prior;
    ep.trace.final = ep.trace.prior;
    return ep;
  }

  if (entry.neighbors.empty()) throw Error(ErrorCode::InvalidArgument, "no neighbor set cached for " + target.id);
  std::vector<Matrix> neighbor_emb;
  neighbor_emb.reserve(entry.neighbors.size());
  for (const lsh::Neighbor& nb : entry.neighbors) neighbor_emb.push_back(enc.embed(pool.at(nb.post_id)));
  const Matrix pool_enc = encode_pool(b.f_ie, neighbor_emb);

  InterStep cur = inter_step(g, b, t_emb, nullptr);
  const Vector o_ta = te.o_ta.value();
  const Vector r_ia_v = r_ia.value();
  Matrix state = build_state(cur.o_ie.value(), pool_enc, o_ta, r_ia_v);
  for (int i = 0; i < cfg.steps; ++i) {
    const Vector probs = policy_forward(m.policy, state);
    const Action a = selection == Selection::Uniform ? random_action(probs, rng) : select_action(probs, epsilon, rng);
    cur = inter_step(g, b, neighbor_emb[static_cast<std::size_t>(a.index)], &cur.carry);
    ep.y = predict_full(g, b, cur.r_ie, te.r_ta, r_ia);
    ep.trace.steps.push_back({std::move(state), a, ep.y.value()});
    ep.chosen_ids.push_back(entry.neighbors[static_cast<std::size_t>(a.index)].post_id);
    state = build_state(cur.o_ie.value(), pool_enc, o_ta, r_ia_v);
  }
  ep.trace.final = ep.y.value();
  return ep;
}

nlohmann::json vec_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vec_from_json(const nlohmann::json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(data.data(), static_cast<Eigen::Index>(data.size()));
}

}  // namespace

// --- modes and config ----------------------------------------------------------

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::Baseline: return "baseline";
    case Mode::Intra: return "intra";
    case Mode::IntraRandom: return "intra-random";
    case Mode::IntraRl: return "intra-rl";
  }
  return "?";
}

Mode parse_mode(std::string_view name) {
  for (Mode m : {Mode::Baseline, Mode::Intra, Mode::IntraRandom, Mode::IntraRl}) {
    if (to_string(m) == name) return m;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown mode '" + std::string(name) + "'");
}

bool uses_inter(Mode mode) { return mode == Mode::IntraRandom || mode == Mode::IntraRl; }

void TrainConfig::validate() const {
  if (epochs < 0 || pretrain_epochs < 0) throw Error(ErrorCode::InvalidArgument, "epoch counts must be >= 0");
  if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "batch_size must be >= 1");
  if (!(lr > 0) || !(lr_policy > 0)) throw Error(ErrorCode::InvalidArgument, "learning rates must be positive");
  if (steps < 1) throw Error(ErrorCode::InvalidArgument, "steps must be >= 1");
  if (!(alpha > 0)) throw Error(ErrorCode::InvalidArgument, "alpha must be positive");
  if (!(epsilon >= 0 && epsilon <= 1) || !(epsilon_final >= 0 && epsilon_final <= 1)) {
    throw Error(ErrorCode::InvalidArgument, "epsilon values must lie in [0, 1]");
  }
  if (neighbors != 50 && neighbors != 100 && neighbors != 200) {
    throw Error(ErrorCode::InvalidArgument, "neighbors must be 50, 100 or 200");
  }
  if (max_history > kMaxHistory) throw Error(ErrorCode::InvalidArgument, "max_history is capped at 400");
  if (!(validation_fraction >= 0 && validation_fraction < 1)) {
    throw Error(ErrorCode::InvalidArgument, "validation_fraction must lie in [0, 1)");
  }
  if (patience < 0 || !(clip_norm > 0)) throw Error(ErrorCode::InvalidArgument, "bad patience or clip norm");
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["mode"] = std::string(to_string(mode));
  j["epochs"] = epochs;
  j["pretrain_epochs"] = pretrain_epochs;
  j["batch_size"] = batch_size;
  j["lr"] = lr;
  j["lr_policy"] = lr_policy;
  j["steps"] = steps;
  j["alpha"] = alpha;
  j["epsilon"] = epsilon;
  j["epsilon_final"] = epsilon_final;
  j["neighbors"] = neighbors;
  j["max_history"] = max_history;
  j["seed"] = seed;
  j["warm_start"] = warm_start;
  j["train_l_ia"] = train_l_ia;
  j["validation_fraction"] = validation_fraction;
  j["patience"] = patience;
  j["clip_norm"] = clip_norm;
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.mode = parse_mode(j.value("mode", std::string(to_string(c.mode))));
  c.epochs = j.value("epochs", c.epochs);
  c.pretrain_epochs = j.value("pretrain_epochs", c.pretrain_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.lr_policy = j.value("lr_policy", c.lr_policy);
  c.steps = j.value("steps", c.steps);
  c.alpha = j.value("alpha", c.alpha);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.epsilon_final = j.value("epsilon_final", c.epsilon_final);
  c.neighbors = j.value("neighbors", c.neighbors);
  c.max_history = j.value("max_history", c.max_history);
  c.seed = j.value("seed", c.seed);
  c.warm_start = j.value("warm_start", c.warm_start);
  c.train_l_ia = j.value("train_l_ia", c.train_l_ia);
  c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
  c.patience = j.value("patience", c.patience);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.validate();
  return c;
}

// --- parameters ------------------------------------------------------------------

std::vector<Parameter*> ModelParams::encoder_parameters() { return branches.parameters(); }

std::vector<Parameter*> ModelParams::parameters() {
  return concat_params({encoder_parameters(), policy_parameters()});
}

TensorMap ModelParams::to_tensors() {
  TensorMap out;
  for (Parameter* p : parameters()) out.emplace(p->name, p->value);
  return out;
}

void ModelParams::assign(const TensorMap& tensors) {
  for (Parameter* p : parameters()) {
    auto it = tensors.find(p->name);
    if (it == tensors.end()) throw Error(ErrorCode::ParseError, "checkpoint lacks " + p->name);
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols()) {
      throw Error(ErrorCode::ParseError, "checkpoint shape mismatch for " + p->name);
    }
    p->value = it->second;
  }
}

ModelParams init_model(std::uint64_t seed) {
  nn::Rng rng(seed);
  ModelParams m;
  m.branches = make_branches(rng);
  m.policy = make_policy(rng);
  m.branches.l_ia.weight.trainable = false;
  m.branches.l_ia.bias.trainable = false;
  return m;
}

Resources prepare_resources(std::span<const Post> corpus, const std::optional<std::filesystem::path>& embedding_file,
                            int min_count) {
  Resources r;
  r.vocab = build_vocab(corpus, min_count);
  r.embeddings = embedding_file ? load_embeddings(*embedding_file, r.vocab) : hashed_embeddings(r.vocab);
  return r;
}

// --- pretraining ---------------------------------------------------------------------

Scalar baseline_loss(ModelParams& model, std::span<const Post> posts, const TextEncoder& enc) {
  if (posts.empty()) return 0.0;
  Scalar total = 0;
  for (const Post& p : posts) {
    Graph g;
    const TargetEncoding te = encode_target(g, model.branches, enc.embed(p));
    total += cross_entropy(hsd::softmax(te.r_ta.value()), label_of(p));
  }
  return total / static_cast<Scalar>(posts.size());
}

PretrainResult pretrain_baseline(ModelParams& model, const Dataset& train, const TextEncoder& enc,
                                 const TrainConfig& config) {
  config.validate();
  if (train.posts.empty()) throw Error(ErrorCode::EmptyCorpus, "no training posts");
  nn::Rng rng(config.seed ^ kPretrainStream);
  const HeldOut split = split_validation(train.posts, config);
  std::vector<Parameter*> params = concat_params({model.branches.f_ta.parameters(), model.branches.l_ta.parameters()});
  optim::Adam opt(params, {config.lr});

  PretrainResult result;
  std::vector<const Post*> order = split.fit;
  std::vector<Post> val_posts;
  for (const Post* p : split.validation) val_posts.push_back(*p);
  Scalar best = std::numeric_limits<Scalar>::infinity();
  std::vector<Matrix> best_values = snapshot(params);
  int stale = 0;

  for (int epoch = 1; epoch <= config.pretrain_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    Scalar epoch_loss = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      opt.zero_grad();
      for (std::size_t k = start; k < stop; ++k) {
        const Post& p = *order[k];
        Graph g;
        const TargetEncoding te = encode_target(g, model.branches, enc.embed(p));
        Var loss = ad::cross_entropy(ad::softmax(te.r_ta), label_of(p));
        epoch_loss += loss.scalar();
        g.backward(loss);
      }
      scale_grads(params, 1.0 / static_cast<Scalar>(stop - start));
      optim::clip_global_norm(params, config.clip_norm);
      opt.step();
    }
    result.train_losses.push_back(epoch_loss / static_cast<Scalar>(std::max<std::size_t>(1, order.size())));
    if (!val_posts.empty()) {
      const Scalar vl = baseline_loss(model, val_posts, enc);
      result.validation_losses.push_back(vl);
      if (vl < best) {
        best = vl;
        best_values = snapshot(params);
        result.best_epoch = epoch;
        stale = 0;
      } else if (++stale >= config.patience) {
        break;
      }
    } else {
      result.best_epoch = epoch;
    }
  }
  if (!val_posts.empty() && result.best_epoch > 0) restore(params, best_values);
  return result;
}

// --- precompute ------------------------------------------------------------------------

const CacheEntry& PrecomputeCache::at(const std::string& id) const {
  auto it = entries.find(id);
  if (it == entries.end()) throw Error(ErrorCode::InvalidArgument, "no cached entry for target " + id);
  return it->second;
}

void PrecomputeCache::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json root;
  root["version"] = 1;
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  for (const auto& [id, e] : entries) {
    nlohmann::ordered_json j;
    j["id"] = id;
    nlohmann::ordered_json nbs = nlohmann::ordered_json::array();
    for (const lsh::Neighbor& n : e.neighbors) {
      nbs.push_back({{"id", n.post_id}, {"index", n.pool_index}, {"similarity", n.similarity}, {"padded", n.padded}});
    }
    j["neighbors"] = std::move(nbs);
    j["history_count"] = e.summary.count;
    j["activation_sum"] = vec_to_json(e.summary.activation_sum);
    j["r_ia"] = vec_to_json(e.r_ia);
    list.push_back(std::move(j));
  }
  root["entries"] = std::move(list);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << root.dump() << '\n';
}

PrecomputeCache PrecomputeCache::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  nlohmann::json root = nlohmann::json::parse(in, nullptr, false);
  if (root.is_discarded() || root.value("version", 0) != 1) {
    throw Error(ErrorCode::ParseError, "unsupported cache file " + path.string());
  }
  PrecomputeCache c;
  for (const auto& j : root["entries"]) {
    CacheEntry e;
    for (const auto& n : j["neighbors"]) {
      e.neighbors.push_back({n["index"].get<std::size_t>(), n["id"].get<std::string>(), n["similarity"].get<double>(),
                             n["padded"].get<bool>()});
    }
    e.summary.count = j["history_count"].get<std::size_t>();
    e.summary.activation_sum = vec_from_json(j["activation_sum"]);
    e.r_ia = vec_from_json(j["r_ia"]);
    c.entries.emplace(j["id"].get<std::string>(), std::move(e));
  }
  return c;
}

bool operator==(const PrecomputeCache& a, const PrecomputeCache& b) {
  if (a.entries.size() != b.entries.size()) return false;
  for (const auto& [id, ea] : a.entries) {
    auto it = b.entries.find(id);
    if (it == b.entries.end()) return false;
    const CacheEntry& eb = it->second;
    if (ea.neighbors.size() != eb.neighbors.size() || ea.summary.count != eb.summary.count ||
        ea.summary.activation_sum != eb.summary.activation_sum || ea.r_ia != eb.r_ia) {
      return false;
    }
    for (std::size_t k = 0; k < ea.neighbors.size(); ++k) {
      const auto &x = ea.neighbors[k], &y = eb.neighbors[k];
      if (x.post_id != y.post_id || x.pool_index != y.pool_index || x.similarity != y.similarity ||
          x.padded != y.padded) {
        return false;
      }
    }
  }
  return true;
}

void install_intra_encoder(ModelParams& model) {
  nn::BiLstm& src = model.branches.f_ta;
  nn::BiLstm& dst = model.branches.f_ia;
  auto from = src.parameters();
  auto to = dst.parameters();
  for (std::size_t k = 0; k < from.size(); ++k) to[k]->value = from[k]->value;
  dst.set_trainable(false);
}

PrecomputeCache precompute(const ModelParams& model, std::span<const Post> targets,
                           const std::map<std::string, HistorySet>& histories, const lsh::LshIndex* index,
                           const TextEncoder& enc, const TrainConfig& config) {
  config.validate();
  PrecomputeCache cache;
  std::map<std::string, IntraSummary> per_user;
  for (const Post& t : targets) {
    CacheEntry e;
    if (index) e.neighbors = index->query(t, config.neighbors).neighbors;
    std::vector<const Post*> hist = history_for(histories, t);
    if (hist.size() > config.max_history) hist.resize(config.max_history);
    auto full = histories.find(t.user_id);
    const bool untouched = full != histories.end() &&
                           std::none_of(full->second.posts.begin(), full->second.posts.end(),
                                        [&](const Post& p) { return p.id == t.id; }) &&
                           full->second.posts.size() <= config.max_history;
    if (untouched) {
      auto it = per_user.find(t.user_id);
      if (it == per_user.end()) it = per_user.emplace(t.user_id, summarize_history(model.branches.f_ia, enc, hist)).first;
      e.summary = it->second;
    } else {
      e.summary = summarize_history(model.branches.f_ia, enc, hist);
    }
    e.r_ia = intra_representation(model.branches.l_ia, e.summary);
    if (!cache.entries.emplace(t.id, std::move(e)).second) {
      throw Error(ErrorCode::DuplicateId, "duplicate target id " + t.id);
    }
  }
  return cache;
}

void warm_start_heads(ModelParams& model) {
  nn::Linear& prior = model.branches.l_c_prior;  // [r_ta | r_ia]
  prior.weight.value.setZero();
  prior.weight.value.leftCols(kClasses).setIdentity();
  prior.bias.value.setZero();
  nn::Linear& full = model.branches.l_c_full;  // [r_ie | r_ta | r_ia]
  full.weight.value.setZero();
  full.weight.value.middleCols(kRepDim, kClasses).setIdentity();
  full.bias.value.setZero();
}

// --- joint training ------------------------------------------------------------------------

PoolView::PoolView(std::span<const Post> pool) {
  for (const Post& p : pool) by_id_.emplace(p.id, &p);
}

const Post& PoolView::at(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw Error(ErrorCode::InvalidArgument, "pool has no post " + id);
  return *it->second;
}

nlohmann::json EpochMetrics::to_json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["train_loss"] = train_loss;
  j["mean_reward"] = mean_reward;
  j["explore_rate"] = explore_rate;
  j["epsilon"] = epsilon;
  j["validation_loss"] = validation_loss ? nlohmann::ordered_json(*validation_loss) : nlohmann::ordered_json(nullptr);
  return j;
}

TrainResult train_epochs(ModelParams& model, const Dataset& train, const PrecomputeCache& cache, const PoolView& pool,
                         const TextEncoder& enc, const TrainConfig& config, const TrainObserver& observer,
                         const std::function<void(const EpochMetrics&)>& on_epoch) {
  config.validate();
  TrainResult result;
  if (config.epochs == 0) return result;
  if (train.posts.empty()) throw Error(ErrorCode::EmptyCorpus, "no training posts");

  nn::Rng rng(config.seed ^ kTrainStream);
  BranchParams& b = model.branches;
  b.l_ia.weight.trainable = b.l_ia.bias.trainable = config.train_l_ia;
  b.f_ia.set_trainable(false);
  const std::vector<Parameter*> enc_params = model.encoder_parameters();
  optim::Adam enc_opt(enc_params, {config.lr});
  optim::Adam pol_opt(model.policy_parameters(), {config.lr_policy});

  const HeldOut split = split_validation(train.posts, config);
  std::vector<const Post*> order = split.fit;
  std::vector<Post> val_posts;
  for (const Post* p : split.validation) val_posts.push_back(*p);

  const Selection selection = config.mode == Mode::IntraRandom ? Selection::Uniform : Selection::EpsilonGreedy;
  const double total_episodes = static_cast<double>(config.epochs) * static_cast<double>(order.size());
  long episode = 0;
  Scalar best = std::numeric_limits<Scalar>::infinity();
  std::optional<ModelParams> best_model;
  int stale = 0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochMetrics metrics;
    metrics.epoch = epoch;
    long explored = 0, steps_taken = 0;
    Scalar loss_sum = 0, reward_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      enc_opt.zero_grad();
      for (std::size_t k = start; k < stop; ++k) {
        const Post& target = *order[k];
        const int label = label_of(target);
        const Scalar frac = total_episodes > 1 ? static_cast<Scalar>(episode) / (total_episodes - 1) : 0.0;
        const Scalar epsilon = config.epsilon + (config.epsilon_final - config.epsilon) * frac;
        metrics.epsilon = epsilon;
        ++episode;

        Graph g;
        Episode ep = run_episode(g, model, target, cache.at(target.id), pool, enc, config, selection, epsilon, rng);
        for (const EpisodeStep& s : ep.trace.steps) explored += s.action.explored;
        steps_taken += static_cast<long>(ep.trace.steps.size());
        if (config.mode == Mode::IntraRl) {
          const Scalar v = compute_reward(ep.trace.prior, ep.trace.final, label, config.alpha);
          reward_sum += v;
          reinforce_update(ep.trace, v, model.policy, pol_opt, config.clip_norm);
          if (observer) observer("policy_update", target.id);
        }
        Var loss = ad::cross_entropy(ep.y, label);
        loss_sum += loss.scalar();
        g.backward(loss);
        if (observer) observer("encoder_backward", target.id);
      }
      scale_grads(enc_params, 1.0 / static_cast<Scalar>(stop - start));
      optim::clip_global_norm(enc_params, config.clip_norm);
      enc_opt.step();
      if (observer) observer("encoder_step", "");
    }
    const Scalar n = static_cast<Scalar>(std::max<std::size_t>(1, order.size()));
    metrics.train_loss = loss_sum / n;
    metrics.mean_reward = reward_sum / n;
    metrics.explore_rate = steps_taken > 0 ? static_cast<Scalar>(explored) / static_cast<Scalar>(steps_taken) : 0.0;

    bool stop_now = false;
    if (!val_posts.empty()) {
      const auto preds = predict_all(model, val_posts, cache, pool, enc, config);
      const Scalar vl = mean_loss(preds, val_posts);
      metrics.validation_loss = vl;
      if (vl < best) {
        best = vl;
        best_model = model;
        result.best_epoch = epoch;
        stale = 0;
      } else if (++stale >= config.patience) {
        stop_now = true;
      }
    } else {
      result.best_epoch = epoch;
    }
    result.epochs.push_back(metrics);
    if (on_epoch) on_epoch(metrics);
    if (stop_now) break;
  }
  if (best_model) model = *best_model;
  return result;
}

Prediction predict(ModelParams& model, const Post& target, const CacheEntry& entry, const PoolView& pool,
                   const TextEncoder& enc, const TrainConfig& config) {
  nn::Rng rng(config.seed ^ kRandomSelectStream ^ fnv1a64(target.id));
  const Selection selection = config.mode == Mode::IntraRandom ? Selection::Uniform : Selection::EpsilonGreedy;
  Graph g;
  const Episode ep = run_episode(g, model, target, entry, pool, enc, config, selection, 0.0, rng);
  Prediction p;
  p.id = target.id;
  p.dist = ep.y.value();
  for (std::size_t i = 0; i < ep.trace.steps.size(); ++i) {
    const EpisodeStep& s = ep.trace.steps[i];
    p.trace.push_back({s.action.index, ep.chosen_ids[i], s.action.log_prob, s.action.explored, s.prediction});
  }
  return p;
}

std::vector<Prediction> predict_all(ModelParams& model, std::span<const Post> targets, const PrecomputeCache& cache,
                                    const PoolView& pool, const TextEncoder& enc, const TrainConfig& config) {
  std::vector<Prediction> out;
  out.reserve(targets.size());
  for (const Post& t : targets) out.push_back(predict(model, t, cache.at(t.id), pool, enc, config));
  return out;
}

Scalar mean_loss(std::span<const Prediction> preds, std::span<const Post> gold) {
  if (preds.size() != gold.size()) throw Error(ErrorCode::ShapeMismatch, "prediction and gold counts differ");
  if (preds.empty()) return 0.0;
  Scalar total = 0;
  for (std::size_t k = 0; k < preds.size(); ++k) total += cross_entropy(preds[k].dist, label_of(gold[k]));
  return total / static_cast<Scalar>(preds.size());
}

}  // namespace hsd
