#include <hsd/errors.hpp>
#include <hsd/synthetic.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace hsd {

namespace {

using Rng = std::mt19937_64;

// Letters-only words so the tokenizer keeps them whole.
std::string word(std::string_view prefix, int k) {
  std::string s(prefix);
  do {
    s.push_back(static_cast<char>('a' + k % 26));
    k /= 26;
  } while (k > 0);
  return s;
}

std::string neutral_word(int k) { return word("n", k); }
std::string hate_word(int k) { return word("zq", k); }
std::string benign_word(int k) { return word("bq", k); }

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out.push_back(' ');
    out += w;
  }
  return out;
}

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
bool coin(Rng& rng, double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

std::vector<std::string> neutral_words(const SynthConfig& c, Rng& rng) {
  const int len = uniform_int(rng, c.min_length, c.max_length);
  std::vector<std::string> w;
  w.reserve(static_cast<std::size_t>(len));
  for (int k = 0; k < len; ++k) w.push_back(neutral_word(uniform_int(rng, 0, c.vocab_size - 1)));
  return w;
}

void insert_markers(std::vector<std::string>& words, int label, const SynthConfig& c, Rng& rng) {
  const int count = uniform_int(rng, 1, 2);
  for (int k = 0; k < count; ++k) {
    const int lex = uniform_int(rng, 0, c.lexicon_size - 1);
    const auto pos = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(words.size()) - 1));
    words[pos] = label == 1 ? hate_word(lex) : benign_word(lex);
  }
}

std::string decorate(std::vector<std::string> words, const SynthConfig& c, Rng& rng) {
  if (coin(rng, c.decoration_rate)) words.insert(words.begin(), "@" + word("u", uniform_int(rng, 0, 999)));
  if (coin(rng, c.decoration_rate)) words.push_back("http://t.co/" + word("", uniform_int(rng, 0, 99999)));
  return join(words);
}

void check_fraction(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::InvalidArgument, std::string(name) + " must lie in [0, 1]");
}

}  // namespace

void SynthConfig::validate() const {
  check_fraction(hate_user_fraction, "hate_user_fraction");
  check_fraction(hate_rate_hate_user, "hate_rate_hate_user");
  check_fraction(label_noise, "label_noise");
  check_fraction(near_duplicate_rate, "near_duplicate_rate");
  check_fraction(cluster_marker_fraction, "cluster_marker_fraction");
  check_fraction(ambiguous_rate, "ambiguous_rate");
  check_fraction(history_signal_rate, "history_signal_rate");
  check_fraction(decoration_rate, "decoration_rate");
  check_fraction(test_fraction, "test_fraction");
  if (n_users < 2 || posts_per_user < 1 || vocab_size < 1 || lexicon_size < 1 || cluster_size < 0 ||
      history_size < 0 || history_size > static_cast<int>(kMaxHistory) || min_length < 1 ||
      max_length < min_length) {
    throw Error(ErrorCode::InvalidArgument, "synthetic config sizes out of range");
  }
}

SynthConfig synth_preset(std::string_view name) {
  SynthConfig c;
  if (name == "default") return c;
  if (name == "ambiguous") {
    c.n_users = 200;
    c.posts_per_user = 10;
    c.lexicon_size = 8;
    c.vocab_size = 60;
    c.min_length = 5;
    c.max_length = 8;
    c.ambiguous_rate = 0.3;
    c.history_size = 20;
    c.history_signal_rate = 0.6;
    c.near_duplicate_rate = 0.0;
    c.test_fraction = 0.25;
    return c;
  }
  if (name == "duplicate") {
    c.n_users = 100;
    c.posts_per_user = 10;
    c.lexicon_size = 8;
    c.vocab_size = 60;
    c.min_length = 5;
    c.max_length = 8;
    c.ambiguous_rate = 0.5;
    c.history_size = 10;
    c.history_signal_rate = 0.0;
    c.near_duplicate_rate = 1.0;
    c.cluster_size = 50;
    c.cluster_marker_fraction = 0.2;
    c.decoration_rate = 0.0;
    c.test_fraction = 0.25;
    return c;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown synthetic preset '" + std::string(name) + "'");
}

SynthCorpus gen_synthetic(const SynthConfig& c, std::uint64_t seed) {
  c.validate();
  Rng rng(seed);

  std::vector<int> order(static_cast<std::size_t>(c.n_users));
  for (int u = 0; u < c.n_users; ++u) order[static_cast<std::size_t>(u)] = u;
  std::shuffle(order.begin(), order.end(), rng);
  const int n_hate_users = static_cast<int>(std::lround(c.hate_user_fraction * c.n_users));
  std::vector<bool> hate_user(static_cast<std::size_t>(c.n_users), false);
  for (int k = 0; k < n_hate_users; ++k) hate_user[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = true;

  auto user_name = [](int u) { return word("user", u); };

  std::vector<Post> labeled;
  std::vector<int> true_labels;
  SynthCorpus out;
  std::vector<Post> variants;
  int variant_counter = 0;

  for (int u = 0; u < c.n_users; ++u) {
    const bool hater = hate_user[static_cast<std::size_t>(u)];
    const int n_hate = hater ? static_cast<int>(std::lround(c.hate_rate_hate_user * c.posts_per_user)) : 0;
    std::vector<int> labels(static_cast<std::size_t>(c.posts_per_user), 0);
    std::fill(labels.begin(), labels.begin() + n_hate, 1);
    std::shuffle(labels.begin(), labels.end(), rng);

    for (int k = 0; k < c.posts_per_user; ++k) {
      const int label = labels[static_cast<std::size_t>(k)];
      std::vector<std::string> words = neutral_words(c, rng);
      const bool ambiguous = coin(rng, c.ambiguous_rate);
      if (!ambiguous) insert_markers(words, label, c, rng);
      const std::string id = "p" + std::to_string(u) + "_" + std::to_string(k);
      const std::string text = decorate(words, c, rng);
      int observed = label;
      if (coin(rng, c.label_noise)) observed = 1 - label;
      labeled.push_back(make_post(id, user_name(u), text, observed));
      true_labels.push_back(label);
      if (ambiguous) out.ambiguous_ids.push_back(id);

      if (c.cluster_size > 0 && coin(rng, c.near_duplicate_rate)) {
        const int n_marked = static_cast<int>(std::lround(c.cluster_marker_fraction * c.cluster_size));
        for (int v = 0; v < c.cluster_size; ++v) {
          int other = uniform_int(rng, 0, c.n_users - 2);
          if (other >= u) ++other;
          std::string vtext = text;
          if (v < n_marked) {
            const int lex = uniform_int(rng, 0, c.lexicon_size - 1);
            vtext += " " + (label == 1 ? hate_word(lex) : benign_word(lex));
          }
          variants.push_back(make_post("d" + std::to_string(variant_counter++), user_name(other), vtext));
        }
      }
    }

    HistorySet hist;
    hist.user_id = user_name(u);
    for (int k = 0; k < c.history_size; ++k) {
      std::vector<std::string> words = neutral_words(c, rng);
      if (coin(rng, c.history_signal_rate)) insert_markers(words, hater ? 1 : 0, c, rng);
      hist.posts.push_back(
          make_post("h" + std::to_string(u) + "_" + std::to_string(k), hist.user_id, decorate(words, c, rng)));
    }
    out.histories.push_back(std::move(hist));
  }

  std::vector<std::size_t> idx(labeled.size());
  for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::lround(c.test_fraction * static_cast<double>(labeled.size())));
  out.test.split = Split::Test;
  out.train.split = Split::Train;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    (k < n_test ? out.test : out.train).posts.push_back(labeled[idx[k]]);
  }

  for (const Post& p : out.train.posts) {
    Post q = p;
    q.label.reset();
    out.pool.push_back(std::move(q));
  }
  for (Post& v : variants) out.pool.push_back(std::move(v));
  return out;
}

void write_corpus(const std::filesystem::path& dir, const SynthCorpus& corpus) {
  std::filesystem::create_directories(dir);
  write_posts(dir / "train.jsonl", corpus.train.posts);
  write_posts(dir / "test.jsonl", corpus.test.posts);
  std::vector<Post> history;
  for (const HistorySet& h : corpus.histories) history.insert(history.end(), h.posts.begin(), h.posts.end());
  write_posts(dir / "history.jsonl", history);
  write_posts(dir / "pool.jsonl", corpus.pool);
  nlohmann::ordered_json meta;
  meta["ambiguous"] = corpus.ambiguous_ids;
  std::ofstream out(dir / "meta.json", std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + (dir / "meta.json").string());
  out << meta.dump(2) << '\n';
}

SynthCorpus read_corpus(const std::filesystem::path& dir) {
  SynthCorpus c;
  c.train.posts = read_posts(dir / "train.jsonl");
  c.train.split = Split::Train;
  if (std::filesystem::exists(dir / "test.jsonl")) {
    c.test.posts = read_posts(dir / "test.jsonl");
    c.test.split = Split::Test;
  }
  if (std::filesystem::exists(dir / "history.jsonl")) {
    const auto hist = read_posts(dir / "history.jsonl");
    for (auto& [user, set] : group_histories(hist)) c.histories.push_back(std::move(set));
  }
  if (std::filesystem::exists(dir / "pool.jsonl")) c.pool = read_posts(dir / "pool.jsonl");
  if (std::filesystem::exists(dir / "meta.json")) {
    std::ifstream in(dir / "meta.json");
    nlohmann::json meta = nlohmann::json::parse(in, nullptr, false);
    if (meta.is_discarded()) throw Error(ErrorCode::ParseError, "malformed meta.json");
    if (meta.contains("ambiguous")) c.ambiguous_ids = meta["ambiguous"].get<std::vector<std::string>>();
  }
  return c;
}

ClusterPool gen_cluster_pool(int clusters, int cluster_size, int post_length, std::uint64_t seed) {
  if (clusters < 1 || cluster_size < 2 || post_length < 2) {
    throw Error(ErrorCode::InvalidArgument, "cluster pool needs >=1 cluster of >=2 posts");
  }
  Rng rng(seed);
  constexpr int kWords = 5000;
  ClusterPool out;
  int user = 0;
  for (int k = 0; k < clusters; ++k) {
    std::vector<std::string> base;
    for (int w = 0; w < post_length; ++w) base.push_back(neutral_word(uniform_int(rng, 0, kWords - 1)));
    const std::string prefix = "c" + std::to_string(k) + "_";
    out.posts.push_back(make_post(prefix + "seed", word("user", user++), join(base)));
    out.posts.push_back(make_post(prefix + "copy", word("user", user++), join(base)));
    out.seed_and_copy.emplace_back(prefix + "seed", prefix + "copy");
    for (int v = 2; v < cluster_size; ++v) {
      std::vector<std::string> words = base;
      const auto pos = static_cast<std::size_t>(uniform_int(rng, 0, post_length - 1));
      words[pos] = neutral_word(kWords + uniform_int(rng, 0, kWords - 1));
      out.posts.push_back(make_post(prefix + "v" + std::to_string(v), word("user", user++), join(words)));
    }
  }
  return out;
}

}  // namespace hsd
