#include <hsd/errors.hpp>
#include <hsd/lsh.hpp>

#include <algorithm>
#include <fstream>
#include <random>
#include <unordered_set>

namespace hsd::lsh {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::vector<std::uint64_t> hash_seeds(std::uint64_t seed, int k) {
  std::vector<std::uint64_t> s(static_cast<std::size_t>(k));
  std::uint64_t state = seed;
  for (auto& v : s) {
    state = splitmix64(state);
    v = state;
  }
  return s;
}

void sort_neighbors(std::vector<Neighbor>& v) {
  std::sort(v.begin(), v.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.similarity != b.similarity ? a.similarity > b.similarity : a.post_id < b.post_id;
  });
}

bool excluded(const Post& candidate, const Post& target) {
  return candidate.id == target.id || candidate.user_id == target.user_id;
}

constexpr char kIndexMagic[8] = {'H', 'S', 'D', 'L', 'S', 'H', '\0', '\0'};
constexpr std::uint32_t kIndexVersion = 1;

}  // namespace

ShingleSet shingles(std::span<const std::string> tokens) {
  ShingleSet out(tokens.begin(), tokens.end());
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) out.push_back(tokens[i] + "_" + tokens[i + 1]);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double jaccard(const ShingleSet& a, const ShingleSet& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t i = 0, j = 0, inter = 0;
  while (i < a.size() && j < b.size()) {
    const int cmp = a[i].compare(b[j]);
    if (cmp == 0) {
      ++inter;
      ++i;
      ++j;
    } else if (cmp < 0) {
      ++i;
    } else {
      ++j;
    }
  }
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

void LshParams::validate() const {
  if (num_hashes < 1 || bands < 1 || rows < 1 || bands * rows != num_hashes) {
    throw Error(ErrorCode::InvalidArgument, "LSH requires bands * rows == num_hashes");
  }
}

Signature minhash_signature(const ShingleSet& set, std::uint64_t seed, int num_hashes) {
  if (set.empty()) throw Error(ErrorCode::EmptyShingles, "cannot sign an empty shingle set");
  const auto seeds = hash_seeds(seed, num_hashes);
  Signature sig(static_cast<std::size_t>(num_hashes), ~std::uint64_t{0});
  for (const std::string& s : set) {
    const std::uint64_t base = fnv1a64(s);
    for (std::size_t j = 0; j < sig.size(); ++j) sig[j] = std::min(sig[j], splitmix64(base ^ seeds[j]));
  }
  return sig;
}

double signature_agreement(const Signature& a, const Signature& b) {
  if (a.size() != b.size() || a.empty()) throw Error(ErrorCode::ShapeMismatch, "signature lengths differ");
  std::size_t same = 0;
  for (std::size_t j = 0; j < a.size(); ++j) same += a[j] == b[j];
  return static_cast<double>(same) / static_cast<double>(a.size());
}

std::size_t NeighborSet::padded_count() const {
  return static_cast<std::size_t>(std::count_if(neighbors.begin(), neighbors.end(), [](const Neighbor& n) { return n.padded; }));
}

std::uint64_t LshIndex::band_key(const Signature& sig, int band) const {
  std::uint64_t h = splitmix64(static_cast<std::uint64_t>(band));
  for (int r = 0; r < params_.rows; ++r) h = splitmix64(h ^ sig[static_cast<std::size_t>(band * params_.rows + r)]);
  return h;
}

void LshIndex::insert_bands(std::size_t i) {
  for (int b = 0; b < params_.bands; ++b) {
    bands_[static_cast<std::size_t>(b)][band_key(signatures_[i], b)].push_back(static_cast<std::uint32_t>(i));
  }
}

LshIndex LshIndex::build(std::span<const Post> pool, std::uint64_t seed, LshParams params) {
  params.validate();
  if (pool.empty()) throw Error(ErrorCode::EmptyCorpus, "cannot index an empty pool");
  LshIndex idx;
  idx.seed_ = seed;
  idx.params_ = params;
  idx.posts_.assign(pool.begin(), pool.end());
  idx.bands_.resize(static_cast<std::size_t>(params.bands));
  idx.shingles_.reserve(pool.size());
  idx.signatures_.reserve(pool.size());
  for (std::size_t i = 0; i < idx.posts_.size(); ++i) {
    const Post& p = idx.posts_[i];
    if (!idx.by_id_.emplace(p.id, i).second) throw Error(ErrorCode::DuplicateId, "duplicate pool post id " + p.id);
    ++idx.per_user_[p.user_id];
    idx.shingles_.push_back(shingles(p.tokens));
    if (idx.shingles_.back().empty()) throw Error(ErrorCode::EmptyShingles, "pool post " + p.id + " has no tokens");
    idx.signatures_.push_back(minhash_signature(idx.shingles_.back(), seed, params.num_hashes));
    idx.insert_bands(i);
  }
  return idx;
}

std::size_t LshIndex::bucket_memberships(std::size_t i) const {
  std::size_t count = 0;
  for (const auto& table : bands_)
    for (const auto& [key, ids] : table) count += static_cast<std::size_t>(std::count(ids.begin(), ids.end(), i));
  return count;
}

std::vector<std::size_t> LshIndex::candidates(const Signature& sig) const {
  std::vector<std::size_t> out;
  for (int b = 0; b < params_.bands; ++b) {
    const auto& table = bands_[static_cast<std::size_t>(b)];
    auto it = table.find(band_key(sig, b));
    if (it == table.end()) continue;
    out.insert(out.end(), it->second.begin(), it->second.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

NeighborSet LshIndex::query(const Post& target, int n) const {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "neighbor count must be >= 1");
  std::size_t eligible = posts_.size();
  if (auto it = per_user_.find(target.user_id); it != per_user_.end()) eligible -= it->second;
  if (auto it = by_id_.find(target.id); it != by_id_.end() && posts_[it->second].user_id != target.user_id) --eligible;
  if (eligible < static_cast<std::size_t>(n)) {
    throw Error(ErrorCode::InsufficientPool, "only " + std::to_string(eligible) + " eligible pool posts for " +
                                                 target.id + ", need " + std::to_string(n));
  }
  const ShingleSet target_set = shingles(target.tokens);
  const Signature sig = minhash_signature(target_set, seed_, params_.num_hashes);

  NeighborSet out;
  out.target_id = target.id;
  std::unordered_set<std::size_t> taken;
  for (std::size_t i : candidates(sig)) {
    if (excluded(posts_[i], target)) continue;
    out.neighbors.push_back({i, posts_[i].id, jaccard(target_set, shingles_[i]), false});
    taken.insert(i);
  }
  sort_neighbors(out.neighbors);
  if (out.neighbors.size() > static_cast<std::size_t>(n)) out.neighbors.resize(static_cast<std::size_t>(n));

  if (out.neighbors.size() < static_cast<std::size_t>(n)) {
    std::vector<std::size_t> rest;
    rest.reserve(eligible);
    for (std::size_t i = 0; i < posts_.size(); ++i) {
      if (!taken.count(i) && !excluded(posts_[i], target)) rest.push_back(i);
    }
    std::mt19937_64 rng(splitmix64(seed_ ^ fnv1a64(target.id)));
    const std::size_t need = static_cast<std::size_t>(n) - out.neighbors.size();
    for (std::size_t k = 0; k < need; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, rest.size() - 1);
      std::swap(rest[k], rest[pick(rng)]);
      const std::size_t i = rest[k];
      out.neighbors.push_back({i, posts_[i].id, jaccard(target_set, shingles_[i]), true});
    }
    sort_neighbors(out.neighbors);
  }
  return out;
}

bool LshIndex::same_structure(const LshIndex& other) const {
  if (seed_ != other.seed_ || signatures_ != other.signatures_ || bands_.size() != other.bands_.size()) return false;
  for (std::size_t b = 0; b < bands_.size(); ++b) {
    if (bands_[b] != other.bands_[b]) return false;
  }
  return true;
}

void LshIndex::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  auto put64 = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
  out.write(kIndexMagic, sizeof kIndexMagic);
  out.write(reinterpret_cast<const char*>(&kIndexVersion), sizeof kIndexVersion);
  put64(seed_);
  put64(static_cast<std::uint64_t>(params_.num_hashes));
  put64(static_cast<std::uint64_t>(params_.bands));
  put64(static_cast<std::uint64_t>(params_.rows));
  put64(posts_.size());
  for (std::size_t i = 0; i < posts_.size(); ++i) {
    put64(posts_[i].id.size());
    out.write(posts_[i].id.data(), static_cast<std::streamsize>(posts_[i].id.size()));
    for (std::uint64_t v : signatures_[i]) put64(v);
  }
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

LshIndex LshIndex::load(const std::filesystem::path& path, std::span<const Post> pool) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  auto get64 = [&]() {
    std::uint64_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw Error(ErrorCode::ParseError, "truncated index file");
    return v;
  };
  char magic[8];
  std::uint32_t version = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (!in || !std::equal(magic, magic + 8, kIndexMagic) || version != kIndexVersion) {
    throw Error(ErrorCode::ParseError, "not a supported index file: " + path.string());
  }
  LshIndex idx;
  idx.seed_ = get64();
  idx.params_.num_hashes = static_cast<int>(get64());
  idx.params_.bands = static_cast<int>(get64());
  idx.params_.rows = static_cast<int>(get64());
  idx.params_.validate();
  const std::uint64_t count = get64();
  if (count != pool.size()) throw Error(ErrorCode::ParseError, "index was built over a different pool");
  idx.posts_.assign(pool.begin(), pool.end());
  idx.bands_.resize(static_cast<std::size_t>(idx.params_.bands));
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t len = get64();
    std::string id(len, '\0');
    in.read(id.data(), static_cast<std::streamsize>(len));
    if (id != idx.posts_[i].id) throw Error(ErrorCode::ParseError, "index post order does not match pool at " + id);
    Signature sig(static_cast<std::size_t>(idx.params_.num_hashes));
    for (auto& v : sig) v = get64();
    idx.by_id_.emplace(id, i);
    ++idx.per_user_[idx.posts_[i].user_id];
    idx.shingles_.push_back(shingles(idx.posts_[i].tokens));
    idx.signatures_.push_back(std::move(sig));
    idx.insert_bands(i);
  }
  return idx;
}

NeighborSet brute_force_topk(std::span<const Post> pool, const Post& target, int n) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "neighbor count must be >= 1");
  const ShingleSet target_set = shingles(target.tokens);
  NeighborSet out;
  out.target_id = target.id;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (excluded(pool[i], target)) continue;
    out.neighbors.push_back({i, pool[i].id, jaccard(target_set, shingles(pool[i].tokens)), false});
  }
  if (out.neighbors.size() < static_cast<std::size_t>(n)) {
    throw Error(ErrorCode::InsufficientPool, "only " + std::to_string(out.neighbors.size()) +
                                                 " eligible pool posts for " + target.id);
  }
  std::partial_sort(out.neighbors.begin(), out.neighbors.begin() + n, out.neighbors.end(),
                    [](const Neighbor& a, const Neighbor& b) {
                      return a.similarity != b.similarity ? a.similarity > b.similarity : a.post_id < b.post_id;
                    });
  out.neighbors.resize(static_cast<std::size_t>(n));
  return out;
}

double recall(const NeighborSet& approx, const NeighborSet& exact) {
  if (exact.neighbors.empty()) return 1.0;
  std::unordered_set<std::string> got;
  for (const Neighbor& n : approx.neighbors) got.insert(n.post_id);
  std::size_t hit = 0;
  for (const Neighbor& n : exact.neighbors) hit += got.count(n.post_id);
  return static_cast<double>(hit) / static_cast<double>(exact.neighbors.size());
}

}  // namespace hsd::lsh
