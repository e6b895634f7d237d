#include <hsd/errors.hpp>
#include <hsd/textio.hpp>

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <sstream>

namespace hsd {

namespace {

bool is_space(unsigned char c) { return std::isspace(c) != 0; }
bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }
bool is_alpha(unsigned char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_word(unsigned char c) { return is_alpha(c) || is_digit(c) || c == '_' || c >= 0x80; }

char lower(unsigned char c) { return static_cast<char>(std::tolower(c)); }

bool starts_with_ci(std::string_view s, std::size_t at, std::string_view prefix) {
  if (s.size() - at < prefix.size()) return false;
  for (std::size_t k = 0; k < prefix.size(); ++k) {
    if (lower(static_cast<unsigned char>(s[at + k])) != prefix[k]) return false;
  }
  return true;
}

// Length of an apostrophe at `at`: 1 for ASCII, 3 for U+2019, 0 otherwise.
std::size_t apostrophe_len(std::string_view s, std::size_t at) {
  if (s[at] == '\'') return 1;
  if (s.size() - at >= 3 && static_cast<unsigned char>(s[at]) == 0xE2 &&
      static_cast<unsigned char>(s[at + 1]) == 0x80 && static_cast<unsigned char>(s[at + 2]) == 0x99) {
    return 3;
  }
  return 0;
}

constexpr std::string_view kSpecials[] = {"<url>", "<user>", "<num>"};

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  const std::size_t n = text.size();
  std::size_t i = 0;
  auto at = [&](std::size_t k) { return static_cast<unsigned char>(text[k]); };
  while (i < n) {
    const unsigned char c = at(i);
    if (is_space(c)) {
      ++i;
      continue;
    }
    const bool boundary = i == 0 || !is_word(at(i - 1));
    if (boundary && (starts_with_ci(text, i, "http://") || starts_with_ci(text, i, "https://") ||
                     starts_with_ci(text, i, "www."))) {
      while (i < n && !is_space(at(i))) ++i;
      out.emplace_back("<url>");
      continue;
    }
    bool special = false;
    for (std::string_view s : kSpecials) {
      if (text.substr(i, s.size()) == s) {
        out.emplace_back(s);
        i += s.size();
        special = true;
        break;
      }
    }
    if (special) continue;
    if (c == '@' && i + 1 < n && is_word(at(i + 1))) {
      ++i;
      while (i < n && is_word(at(i))) ++i;
      out.emplace_back("<user>");
      continue;
    }
    if (c == '#' && i + 1 < n && is_word(at(i + 1))) {
      std::string tag = "#";
      ++i;
      while (i < n && is_word(at(i))) tag.push_back(lower(at(i++)));
      out.push_back(std::move(tag));
      continue;
    }
    if (is_digit(c)) {
      while (i < n && (is_digit(at(i)) || ((text[i] == '.' || text[i] == ',') && i + 1 < n && is_digit(at(i + 1))))) {
        ++i;
      }
      out.emplace_back("<num>");
      continue;
    }
    if (const std::size_t alen = apostrophe_len(text, i); alen > 0 && i + alen < n && is_alpha(at(i + alen))) {
      std::string clitic = "'";
      i += alen;
      while (i < n && is_alpha(at(i))) clitic.push_back(lower(at(i++)));
      out.push_back(std::move(clitic));
      continue;
    }
    if (is_word(c) && apostrophe_len(text, i) == 0) {
      std::string word;
      while (i < n && is_word(at(i)) && !is_digit(at(i)) && apostrophe_len(text, i) == 0) {
        word.push_back(lower(at(i++)));
      }
      out.push_back(std::move(word));
      continue;
    }
    const std::size_t alen = apostrophe_len(text, i);
    out.emplace_back(alen == 3 ? std::string("'") : std::string(1, static_cast<char>(c)));
    i += std::max<std::size_t>(alen, 1);
  }
  return out;
}

Post make_post(std::string id, std::string user_id, std::string text, std::optional<int> label) {
  Post p;
  p.id = std::move(id);
  p.user_id = std::move(user_id);
  p.text = std::move(text);
  p.tokens = tokenize(p.text);
  p.label = label;
  return p;
}

std::size_t Dataset::count(int label) const {
  return static_cast<std::size_t>(
      std::count_if(posts.begin(), posts.end(), [label](const Post& p) { return p.label == label; }));
}

double Dataset::hate_fraction() const {
  if (posts.empty()) return 0.0;
  return static_cast<double>(count(1)) / static_cast<double>(posts.size());
}

// --- vocabulary --------------------------------------------------------------

Vocab::Vocab() : Vocab(std::vector<std::string>{}) {}

Vocab::Vocab(const std::vector<std::string>& tokens) {
  tokens_.reserve(tokens.size() + 2);
  tokens_.emplace_back(kUnkToken);
  tokens_.emplace_back(kPadToken);
  index_[kUnkToken] = kUnk;
  index_[kPadToken] = kPad;
  for (const std::string& t : tokens) {
    if (index_.count(t)) throw Error(ErrorCode::DuplicateId, "duplicate vocabulary entry '" + t + "'");
    index_[t] = static_cast<int>(tokens_.size());
    tokens_.push_back(t);
  }
}

int Vocab::index(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Vocab::encode(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const std::string& t : tokens) ids.push_back(index(t));
  return ids;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (std::size_t i = 2; i < tokens_.size(); ++i) out << tokens_[i] << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) tokens.push_back(line);
  }
  return Vocab(tokens);
}

Vocab build_vocab(std::span<const Post> corpus, int min_count, std::size_t max_size) {
  if (min_count < 1) throw Error(ErrorCode::InvalidArgument, "min_count must be >= 1");
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "cannot build a vocabulary from no posts");
  std::unordered_map<std::string, long> freq;
  for (const Post& p : corpus)
    for (const std::string& t : p.tokens) ++freq[t];
  std::vector<std::pair<std::string, long>> kept;
  for (auto& [tok, n] : freq) {
    if (n >= min_count && tok != Vocab::kUnkToken && tok != Vocab::kPadToken) kept.emplace_back(tok, n);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (kept.size() > max_size) kept.resize(max_size);
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& kv : kept) tokens.push_back(kv.first);
  return Vocab(tokens);
}

// --- embeddings ----------------------------------------------------------------

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

Vector hashed_vector(const std::string& token, int dim) {
  std::mt19937_64 rng(fnv1a64(token));
  Vector v(dim);
  for (int k = 0; k < dim; ++k) {
    const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    v(k) = -0.1 + 0.2 * unit;
  }
  return v;
}

Matrix EmbeddingTable::embed(std::span<const int> ids) const {
  Matrix out(table.cols(), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t j = 0; j < ids.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = table.row(ids[j]).transpose();
  return out;
}

EmbeddingTable hashed_embeddings(const Vocab& vocab) {
  EmbeddingTable e;
  e.table.resize(static_cast<Eigen::Index>(vocab.size()), kEmbeddingDim);
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    e.table.row(static_cast<Eigen::Index>(i)) = hashed_vector(vocab.token(static_cast<int>(i))).transpose();
  }
  e.table.row(Vocab::kPad).setZero();
  return e;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path, const Vocab& vocab) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::string line;
  long count = 0, dim = 0;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, path.string() + ":1: missing header");
  {
    std::istringstream hs(line);
    if (!(hs >> count >> dim)) throw Error(ErrorCode::ParseError, path.string() + ":1: header must be 'count dim'");
  }
  if (dim != kEmbeddingDim) {
    throw Error(ErrorCode::DimMismatch, "embedding dim " + std::to_string(dim) + " != " + std::to_string(kEmbeddingDim));
  }
  EmbeddingTable e = hashed_embeddings(vocab);
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    Vector v(kEmbeddingDim);
    for (int k = 0; k < kEmbeddingDim; ++k) {
      if (!(ls >> v(k))) {
        throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(lineno) + ": expected " +
                                               std::to_string(kEmbeddingDim) + " values");
      }
    }
    std::string extra;
    if (ls >> extra) {
      throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(lineno) + ": trailing values");
    }
    if (!v.allFinite()) {
      throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(lineno) + ": non-finite value");
    }
    if (vocab.contains(token)) {
      const int idx = vocab.index(token);
      if (idx != Vocab::kPad) e.table.row(idx) = v.transpose();
    }
  }
  return e;
}

// --- JSON Lines ---------------------------------------------------------------

std::vector<Post> read_posts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<Post> posts;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::ParseError, where + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j.contains("user") || !j.contains("text") ||
        !j["id"].is_string() || !j["user"].is_string() || !j["text"].is_string()) {
      throw Error(ErrorCode::ParseError, where + ": expected string fields id, user, text");
    }
    std::optional<int> label;
    if (j.contains("label") && !j["label"].is_null()) {
      const auto& l = j["label"];
      if (l.is_number_integer() && (l.get<int>() == 0 || l.get<int>() == 1)) {
        label = l.get<int>();
      } else if (l.is_string()) {
        std::string s = l.get<std::string>();
        std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return lower(c); });
        if (s == "racism" || s == "sexism" || s == "hate") {
          label = 1;
        } else if (s == "none" || s == "neither" || s == "non-hate") {
          label = 0;
        } else {
          throw Error(ErrorCode::ParseError, where + ": unknown label '" + s + "'");
        }
      } else {
        throw Error(ErrorCode::ParseError, where + ": label must be 0, 1 or null");
      }
    }
    posts.push_back(make_post(j["id"].get<std::string>(), j["user"].get<std::string>(),
                              j["text"].get<std::string>(), label));
  }
  return posts;
}

void write_posts(const std::filesystem::path& path, std::span<const Post> posts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  for (const Post& p : posts) {
    nlohmann::ordered_json j;
    j["id"] = p.id;
    j["user"] = p.user_id;
    j["text"] = p.text;
    j["label"] = p.label ? nlohmann::ordered_json(*p.label) : nlohmann::ordered_json(nullptr);
    out << j.dump() << '\n';
  }
}

std::map<std::string, HistorySet> group_histories(std::span<const Post> posts, std::size_t max_history) {
  std::map<std::string, HistorySet> out;
  for (const Post& p : posts) {
    HistorySet& h = out[p.user_id];
    h.user_id = p.user_id;
    if (h.posts.size() < max_history) h.posts.push_back(p);
  }
  return out;
}

std::vector<const Post*> history_for(const std::map<std::string, HistorySet>& histories, const Post& target) {
  std::vector<const Post*> out;
  auto it = histories.find(target.user_id);
  if (it == histories.end()) return out;
  for (const Post& p : it->second.posts) {
    if (p.id != target.id) out.push_back(&p);
  }
  return out;
}

}  // namespace hsd
