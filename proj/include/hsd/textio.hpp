#pragma once

#include <hsd/math.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace hsd {

inline constexpr int kEmbeddingDim = 200;
inline constexpr std::size_t kMaxHistory = 400;

/// One message. `label` is 1 for hate, 0 otherwise, and absent for
/// unlabeled history or pool posts.
struct Post {
  std::string id;
  std::string user_id;
  std::string text;
  std::vector<std::string> tokens;
  std::optional<int> label;

  friend bool operator==(const Post&, const Post&) = default;
};

/// Builds a post whose tokens are derived from `text`.
Post make_post(std::string id, std::string user_id, std::string text, std::optional<int> label = std::nullopt);

enum class Split { Train, Test };

struct Dataset {
  std::vector<Post> posts;
  Split split = Split::Train;

  std::size_t count(int label) const;
  double hate_fraction() const;
};

struct HistorySet {
  std::string user_id;
  std::vector<Post> posts;
};

/// Lowercases, maps URLs to <url>, @-mentions to <user> and numbers to <num>,
/// keeps hashtags whole, splits clitics ("I'm" -> i 'm) and emits every other
/// punctuation character as its own token.
std::vector<std::string> tokenize(std::string_view text);

class Vocab {
 public:
  static constexpr int kUnk = 0;
  static constexpr int kPad = 1;
  static constexpr const char* kUnkToken = "<unk>";
  static constexpr const char* kPadToken = "<pad>";

  Vocab();
  /// `tokens` excludes the two specials; they are prepended.
  explicit Vocab(const std::vector<std::string>& tokens);

  int index(const std::string& token) const;
  bool contains(const std::string& token) const { return index_.count(token) > 0; }
  const std::string& token(int index) const { return tokens_.at(static_cast<std::size_t>(index)); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(std::span<const std::string> tokens) const;

  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

inline constexpr int kDefaultMinCount = 2;
inline constexpr std::size_t kDefaultVocabCap = 50000;

/// Keeps tokens seen at least `min_count` times, most frequent first with
/// ties broken by token, capped at `max_size` non-special entries.
Vocab build_vocab(std::span<const Post> corpus, int min_count = kDefaultMinCount,
                  std::size_t max_size = kDefaultVocabCap);

/// |V| x 200, one row per vocabulary entry.
struct EmbeddingTable {
  Matrix table;

  Eigen::Index dim() const { return table.cols(); }
  /// Gathers rows into a dim x ids.size() matrix (one column per token).
  Matrix embed(std::span<const int> ids) const;
};

/// Deterministic vector for a token missing from the embedding file,
/// uniform in [-0.1, 0.1] and seeded by a hash of the token.
Vector hashed_vector(const std::string& token, int dim = kEmbeddingDim);

/// Every row from `hashed_vector`, PAD zero.
EmbeddingTable hashed_embeddings(const Vocab& vocab);

/// Maps a post's tokens through a vocabulary into embedding columns.
struct TextEncoder {
  const Vocab& vocab;
  const EmbeddingTable& embeddings;

  /// dim x |tokens|; zero columns for a post without tokens.
  Matrix embed(const Post& post) const { return embeddings.embed(vocab.encode(post.tokens)); }
};

/// Reads "count dim" then "token v1 ... vdim" lines.
EmbeddingTable load_embeddings(const std::filesystem::path& path, const Vocab& vocab);

/// FNV-1a, stable across platforms.
std::uint64_t fnv1a64(std::string_view s);

/// JSON Lines: {"id": str, "user": str, "text": str, "label": 0|1|null}.
/// String labels "racism" and "sexism" map to 1, "none"/"neither" to 0.
std::vector<Post> read_posts(const std::filesystem::path& path);
void write_posts(const std::filesystem::path& path, std::span<const Post> posts);

/// Groups posts by author keeping at most `max_history` per user in input order.
std::map<std::string, HistorySet> group_histories(std::span<const Post> posts, std::size_t max_history = kMaxHistory);

/// The history of `target`'s author with the target itself removed.
std::vector<const Post*> history_for(const std::map<std::string, HistorySet>& histories, const Post& target);

}  // namespace hsd
