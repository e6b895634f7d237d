#pragma once

#include <hsd/math.hpp>

#include <filesystem>
#include <map>
#include <string>

namespace hsd {

/// Named dense tensors, stored row-major as raw IEEE-754 doubles so a
/// save/load round trip is bit-exact.
///
/// Layout: magic "HSDCKPT\0", u32 version, u64 count, then per tensor:
/// u64 name length, name bytes, u64 rows, u64 cols, rows*cols f64.
using TensorMap = std::map<std::string, Matrix>;

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_tensors(const std::filesystem::path& path, const TensorMap& tensors);
TensorMap load_tensors(const std::filesystem::path& path);

}  // namespace hsd
