// Command-line front end: corpus preparation, training stages, prediction and
// evaluation over a run directory.
#include <hsd/errors.hpp>
#include <hsd/metrics.hpp>
#include <hsd/pipeline.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>

namespace fs = std::filesystem;
using namespace hsd;

namespace {

constexpr const char* kBaselineCkpt = "baseline.ckpt";
constexpr const char* kVocabFile = "vocab.txt";
constexpr const char* kIndexFile = "index.bin";

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::ParseError, "malformed JSON in " + path.string());
  return j;
}

void require_file(const fs::path& path, const std::string& hint) {
  if (!fs::exists(path)) throw Error(ErrorCode::IoError, "missing " + path.string() + " (" + hint + ")");
}

fs::path model_path(const fs::path& run, Mode mode) { return run / ("model-" + std::string(to_string(mode)) + ".ckpt"); }
fs::path config_path(const fs::path& run, Mode mode) {
  return run / ("config-" + std::string(to_string(mode)) + ".json");
}

// Model weights plus the frozen word vectors.
void save_model(const fs::path& path, ModelParams& model, const Resources& res) {
  TensorMap t = model.to_tensors();
  t.emplace("embeddings", res.embeddings.table);
  save_tensors(path, t);
}

ModelParams load_model(const fs::path& path, std::uint64_t seed, Resources* res) {
  const TensorMap t = load_tensors(path);
  ModelParams m = init_model(seed);
  m.assign(t);
  m.branches.f_ia.set_trainable(false);
  if (res) {
    auto it = t.find("embeddings");
    if (it == t.end()) throw Error(ErrorCode::ParseError, path.string() + " has no embeddings");
    res->embeddings.table = it->second;
  }
  return m;
}

Resources load_resources(const fs::path& run) {
  require_file(run / kVocabFile, "run pretrain first");
  Resources res;
  res.vocab = Vocab::load(run / kVocabFile);
  load_model(run / kBaselineCkpt, 0, &res);
  return res;
}


void add_train_flags(CLI::App* cmd, TrainConfig& cfg) {
  cmd->add_option("--epochs", cfg.epochs, "Joint training epochs")->check(CLI::NonNegativeNumber);
  cmd->add_option("--batch-size", cfg.batch_size, "Targets per encoder update")->check(CLI::PositiveNumber);
  cmd->add_option("--lr", cfg.lr, "Encoder learning rate");
  cmd->add_option("--lr-policy", cfg.lr_policy, "Policy learning rate");
  cmd->add_option("--steps", cfg.steps, "Selections per episode (T)")->check(CLI::PositiveNumber);
  cmd->add_option("--alpha", cfg.alpha, "Reward weight when the prior prediction is wrong");
  cmd->add_option("--epsilon", cfg.epsilon, "Initial exploration rate")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--epsilon-final", cfg.epsilon_final, "Exploration rate at the last episode")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--neighbors", cfg.neighbors, "Candidate pool size per target")
      ->check(CLI::IsMember({50, 100, 200}));
  cmd->add_option("--patience", cfg.patience, "Early-stopping patience in epochs (0 disables)");
  cmd->add_option("--validation-fraction", cfg.validation_fraction, "Held-out share of the training set");
  cmd->add_flag("--train-l-ia", cfg.train_l_ia, "Train the intra-user projection instead of caching it");
  cmd->add_flag("!--no-warm-start", cfg.warm_start, "Start from fresh weights instead of the pretrained baseline");
}

// --- commands ------------------------------------------------------------------------

struct IngestArgs {
  std::vector<fs::path> inputs;
  fs::path out;
  fs::path history;
  fs::path pool;
  double test_size = 0.0;
  std::uint64_t seed = 1;
};

void cmd_ingest(const IngestArgs& a) {
  // Posts seen in several files keep their first text; the first non-null
  // label wins.
  std::vector<Post> posts;
  std::map<std::string, std::size_t> at;
  for (const fs::path& in : a.inputs) {
    for (Post& p : read_posts(in)) {
      auto it = at.find(p.id);
      if (it == at.end()) {
        at.emplace(p.id, posts.size());
        posts.push_back(std::move(p));
      } else if (!posts[it->second].label && p.label) {
        posts[it->second].label = p.label;
      }
    }
  }
  std::vector<Post> labeled, unlabeled;
  std::size_t dropped = 0;
  for (Post& p : posts) {
    if (p.tokens.empty()) {
      ++dropped;
      continue;
    }
    (p.label ? labeled : unlabeled).push_back(std::move(p));
  }
  if (labeled.empty()) throw Error(ErrorCode::EmptyCorpus, "no labeled posts in input");
  std::mt19937_64 rng(a.seed);
  std::shuffle(labeled.begin(), labeled.end(), rng);
  const auto n_test = static_cast<std::size_t>(a.test_size * static_cast<double>(labeled.size()));
  std::vector<Post> test(labeled.begin(), labeled.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<Post> train(labeled.begin() + static_cast<std::ptrdiff_t>(n_test), labeled.end());

  fs::create_directories(a.out);
  write_posts(a.out / "train.jsonl", train);
  if (!test.empty()) write_posts(a.out / "test.jsonl", test);
  std::vector<Post> history = unlabeled;
  if (!a.history.empty()) {
    for (Post& p : read_posts(a.history)) history.push_back(std::move(p));
  }
  if (!history.empty()) write_posts(a.out / "history.jsonl", history);
  if (!a.pool.empty()) write_posts(a.out / "pool.jsonl", read_posts(a.pool));
  build_vocab(train).save(a.out / kVocabFile);
  std::cout << "train " << train.size() << ", test " << test.size() << ", history " << history.size()
            << ", dropped " << dropped << " empty posts\n";
}

struct SynthArgs {
  fs::path out;
  std::uint64_t seed = 1;
  std::string preset = "default";
  std::optional<int> users, posts_per_user;
  std::optional<double> ambiguous_rate, test_fraction;
};

void cmd_gen_synthetic(const SynthArgs& a) {
  SynthConfig c = synth_preset(a.preset);
  if (a.users) c.n_users = *a.users;
  if (a.posts_per_user) c.posts_per_user = *a.posts_per_user;
  if (a.ambiguous_rate) c.ambiguous_rate = *a.ambiguous_rate;
  if (a.test_fraction) c.test_fraction = *a.test_fraction;
  const SynthCorpus corpus = gen_synthetic(c, a.seed);
  write_corpus(a.out, corpus);
  std::cout << "train " << corpus.train.posts.size() << ", test " << corpus.test.posts.size() << ", pool "
            << corpus.pool.size() << ", users " << corpus.histories.size() << "\n";
}

struct StageArgs {
  fs::path data;
  fs::path run;
  fs::path embeddings;
  std::uint64_t seed = 1;
  TrainConfig cfg;
};

void cmd_pretrain(StageArgs a) {
  a.cfg.seed = a.seed;
  a.cfg.validate();
  const SynthCorpus corpus = read_corpus(a.data);
  const std::vector<Post> pool = effective_pool(corpus);
  std::optional<fs::path> emb;
  if (!a.embeddings.empty()) emb = a.embeddings;
  Resources res = corpus_resources(corpus, pool, emb);
  ModelParams model = init_model(a.cfg.seed);
  const PretrainResult pr = pretrain_baseline(model, corpus.train, res.encoder(), a.cfg);
  install_intra_encoder(model);

  fs::create_directories(a.run);
  res.vocab.save(a.run / kVocabFile);
  save_model(a.run / kBaselineCkpt, model, res);
  nlohmann::ordered_json log;
  log["train_losses"] = pr.train_losses;
  log["validation_losses"] = pr.validation_losses;
  log["best_epoch"] = pr.best_epoch;
  write_json(a.run / "pretrain.json", log);
  write_json(a.run / "config.json", a.cfg.to_json());
  std::cout << "pretrained " << pr.train_losses.size() << " epochs, best " << pr.best_epoch << "\n";
}

void cmd_build_index(const StageArgs& a) {
  const SynthCorpus corpus = read_corpus(a.data);
  const std::vector<Post> pool = effective_pool(corpus);
  const lsh::LshIndex index = lsh::LshIndex::build(pool, a.seed);
  fs::create_directories(a.run);
  index.save(a.run / kIndexFile);
  std::cout << "indexed " << index.size() << " posts\n";
}

void cmd_train(StageArgs a, const std::string& mode_name) {
  a.cfg.mode = parse_mode(mode_name);
  a.cfg.seed = a.seed;
  a.cfg.validate();
  require_file(a.run / kBaselineCkpt, "run pretrain first");
  const SynthCorpus corpus = read_corpus(a.data);
  const std::vector<Post> pool = effective_pool(corpus);
  Experiment exp;
  exp.resources = load_resources(a.run);
  exp.pool = pool;
  exp.pretrained = load_model(a.run / kBaselineCkpt, a.cfg.seed, nullptr);
  if (uses_inter(a.cfg.mode)) {
    require_file(a.run / kIndexFile, "run build-index first");
    exp.index = lsh::LshIndex::load(a.run / kIndexFile, exp.pool);
  }
  const TextEncoder enc = exp.resources.encoder();
  exp.cache = precompute(exp.pretrained, all_targets(corpus), history_map(corpus.histories),
                         exp.index ? &*exp.index : nullptr, enc, a.cfg);
  exp.cache.save(a.run / ("cache-" + mode_name + ".json"));

  ModelParams model = initial_model(exp, a.cfg);
  std::ofstream metrics(a.run / ("metrics-" + mode_name + ".jsonl"));
  const TrainResult result = train_epochs(model, corpus.train, exp.cache, PoolView(exp.pool), enc, a.cfg, {},
                                          [&](const EpochMetrics& m) {
                                            metrics << m.to_json().dump() << '\n';
                                            std::cout << "epoch " << m.epoch << " loss " << m.train_loss << "\n";
                                          });
  save_model(model_path(a.run, a.cfg.mode), model, exp.resources);
  write_json(config_path(a.run, a.cfg.mode), a.cfg.to_json());
  std::cout << "trained " << result.epochs.size() << " epochs, best " << result.best_epoch << "\n";
}

struct PredictArgs {
  fs::path data;
  fs::path run;
  std::string mode = "intra-rl";
  std::string split = "test";
  fs::path out;
};

void cmd_predict(const PredictArgs& a) {
  const Mode mode = parse_mode(a.mode);
  require_file(model_path(a.run, mode), "run train --mode " + a.mode + " first");
  const TrainConfig cfg = TrainConfig::from_json(read_json(config_path(a.run, mode)));
  const SynthCorpus corpus = read_corpus(a.data);
  const std::vector<Post>& targets = a.split == "train" ? corpus.train.posts : corpus.test.posts;
  if (targets.empty()) throw Error(ErrorCode::EmptyCorpus, "no " + a.split + " posts in " + a.data.string());
  const std::vector<Post> pool = effective_pool(corpus);
  Resources res = load_resources(a.run);
  ModelParams model = load_model(model_path(a.run, mode), cfg.seed, nullptr);
  const PrecomputeCache cache = PrecomputeCache::load(a.run / ("cache-" + a.mode + ".json"));
  const auto preds = predict_all(model, targets, cache, PoolView(pool), res.encoder(), cfg);

  std::ofstream out(a.out);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + a.out.string());
  for (const Prediction& p : preds) {
    nlohmann::ordered_json j;
    j["id"] = p.id;
    j["pred"] = p.label();
    j["scores"] = {p.dist(0), p.dist(1)};
    out << j.dump() << '\n';
  }
  std::cout << "wrote " << preds.size() << " predictions\n";
}

std::map<std::string, int> read_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::map<std::string, int> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("id") || !j.contains("pred")) {
      throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(n) + ": bad prediction line");
    }
    out[j["id"].get<std::string>()] = j["pred"].get<int>();
  }
  return out;
}

struct EvalArgs {
  std::vector<std::string> preds;  // name=path or path
  fs::path gold;
  fs::path out;
};

int cmd_evaluate(const EvalArgs& a) {
  const std::vector<Post> gold_posts = read_posts(a.gold);
  const std::vector<int> gold = labels_of(gold_posts);
  std::vector<std::pair<std::string, std::vector<int>>> named;
  for (const std::string& arg : a.preds) {
    const auto eq = arg.find('=');
    const std::string name = eq == std::string::npos ? fs::path(arg).stem().string() : arg.substr(0, eq);
    const fs::path path = eq == std::string::npos ? fs::path(arg) : fs::path(arg.substr(eq + 1));
    const auto by_id = read_predictions(path);
    std::vector<int> labels;
    for (const Post& p : gold_posts) {
      auto it = by_id.find(p.id);
      if (it == by_id.end()) throw Error(ErrorCode::InvalidArgument, path.string() + " lacks a prediction for " + p.id);
      labels.push_back(it->second);
    }
    named.emplace_back(name, std::move(labels));
  }
  const MetricsReport report = build_report(named, gold);
  for (const ModelScore& m : report.models) {
    for (const std::string& w : m.scores.warnings) std::cerr << "warning: " << m.name << ": " << w << "\n";
  }
  if (!a.out.empty()) write_json(a.out, report.to_json());
  std::cout << report.table();
  const bool undefined = std::any_of(report.comparisons.begin(), report.comparisons.end(),
                                     [](const PairTest& t) { return !t.result; });
  if (undefined) {
    std::cerr << "error: McNemar test undefined: prediction sets have no discordant pairs\n";
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hate speech classifier with user-history and similar-post branches"};
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Normalize raw JSON Lines posts into a corpus directory");
  c_ingest->add_option("--input", ingest.inputs, "Raw JSONL file(s); labels are merged by id")
      ->required()
      ->check(CLI::ExistingFile);
  c_ingest->add_option("--out", ingest.out, "Corpus directory")->required();
  c_ingest->add_option("--history", ingest.history, "Extra unlabeled author posts")->check(CLI::ExistingFile);
  c_ingest->add_option("--pool", ingest.pool, "Retrieval pool posts")->check(CLI::ExistingFile);
  c_ingest->add_option("--test-size", ingest.test_size, "Share of labeled posts held out as test")
      ->check(CLI::Range(0.0, 0.9));
  c_ingest->add_option("--seed", ingest.seed, "Split seed");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("gen-synthetic", "Write a synthetic corpus");
  c_synth->add_option("--out", synth.out, "Corpus directory")->required();
  c_synth->add_option("--seed", synth.seed, "Generator seed");
  c_synth->add_option("--preset", synth.preset, "default, ambiguous or duplicate")
      ->check(CLI::IsMember({"default", "ambiguous", "duplicate"}));
  c_synth->add_option("--users", synth.users, "Number of authors");
  c_synth->add_option("--posts-per-user", synth.posts_per_user, "Labeled posts per author");
  c_synth->add_option("--ambiguous-rate", synth.ambiguous_rate, "Share of posts without class words");
  c_synth->add_option("--test-fraction", synth.test_fraction, "Share of labeled posts held out");

  StageArgs pre;
  auto* c_pre = app.add_subcommand("pretrain", "Train the text-only baseline");
  c_pre->add_option("--data", pre.data, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  c_pre->add_option("--run", pre.run, "Run directory")->required();
  c_pre->add_option("--embeddings", pre.embeddings, "Word vector text file (count dim header)")
      ->check(CLI::ExistingFile);
  c_pre->add_option("--epochs", pre.cfg.pretrain_epochs, "Pretraining epochs")->check(CLI::NonNegativeNumber);
  c_pre->add_option("--batch-size", pre.cfg.batch_size, "Posts per update")->check(CLI::PositiveNumber);
  c_pre->add_option("--lr", pre.cfg.lr, "Learning rate");
  c_pre->add_option("--patience", pre.cfg.patience, "Early-stopping patience in epochs (0 disables)");
  c_pre->add_option("--seed", pre.seed, "Initialization and shuffling seed");

  StageArgs idx;
  auto* c_idx = app.add_subcommand("build-index", "Build the MinHash index over the retrieval pool");
  c_idx->add_option("--data", idx.data, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  c_idx->add_option("--run", idx.run, "Run directory")->required();
  c_idx->add_option("--seed", idx.seed, "Hash seed");

  StageArgs tr;
  std::string mode = "intra-rl";
  auto* c_train = app.add_subcommand("train", "Joint training in one of the model modes");
  c_train->add_option("--data", tr.data, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  c_train->add_option("--run", tr.run, "Run directory holding the pretrained baseline")
      ->required()
      ->check(CLI::ExistingDirectory);
  c_train->add_option("--mode", mode, "baseline, intra, intra-random or intra-rl")
      ->check(CLI::IsMember({"baseline", "intra", "intra-random", "intra-rl"}));
  c_train->add_option("--seed", tr.seed, "Training seed");
  add_train_flags(c_train, tr.cfg);

  PredictArgs pr;
  auto* c_pred = app.add_subcommand("predict", "Write predictions of a trained mode");
  c_pred->add_option("--data", pr.data, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  c_pred->add_option("--run", pr.run, "Run directory")->required()->check(CLI::ExistingDirectory);
  c_pred->add_option("--mode", pr.mode, "Trained mode to use")
      ->check(CLI::IsMember({"baseline", "intra", "intra-random", "intra-rl"}));
  c_pred->add_option("--split", pr.split, "train or test")->check(CLI::IsMember({"train", "test"}));
  c_pred->add_option("--out", pr.out, "Prediction JSONL")->required();

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "Score prediction files and compare them pairwise");
  c_eval->add_option("--pred", ev.preds, "Prediction JSONL, optionally name=path")->required();
  c_eval->add_option("--gold", ev.gold, "Labeled posts JSONL")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--out", ev.out, "Report JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*c_ingest) cmd_ingest(ingest);
    if (*c_synth) cmd_gen_synthetic(synth);
    if (*c_pre) cmd_pretrain(pre);
    if (*c_idx) cmd_build_index(idx);
    if (*c_train) cmd_train(tr, mode);
    if (*c_pred) cmd_predict(pr);
    if (*c_eval) return cmd_evaluate(ev);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
