#include <hsd/checkpoint.hpp>
#include <hsd/errors.hpp>

#include <array>
#include <cstring>
#include <fstream>

namespace hsd {

namespace {

constexpr std::array<char, 8> kMagic = {'H', 'S', 'D', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw Error(ErrorCode::ParseError, "truncated checkpoint " + path.string());
  }
  return v;
}

}  // namespace

void save_tensors(const std::filesystem::path& path, const TensorMap& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, tensors.size());
  for (const auto& [name, m] : tensors) {
    put<std::uint64_t>(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) put<double>(out, m(i, j));
  }
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

TensorMap load_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw Error(ErrorCode::ParseError, "not a checkpoint: " + path.string());
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::ParseError, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = get<std::uint64_t>(in, path);
  TensorMap out;
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto len = get<std::uint64_t>(in, path);
    if (len > (1u << 20)) throw Error(ErrorCode::ParseError, "implausible tensor name length");
    std::string name(len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(len));
    const auto rows = get<std::uint64_t>(in, path);
    const auto cols = get<std::uint64_t>(in, path);
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = get<double>(in, path);
    out.emplace(std::move(name), std::move(m));
  }
  return out;
}

}  // namespace hsd
