#pragma once

#include "newsim/model.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>

namespace newsim {

// Checkpoint layout (all integers little-endian):
//   bytes 0-3   magic "NSIM"
//   u32         format version
//   u32         byte length N of the config JSON
//   N bytes     ModelConfig as canonical JSON (sorted keys, no whitespace)
//   u64         total float count
//   f32 * count tensors in tensors() order, each row-major
inline constexpr std::uint32_t checkpoint_version = 1;

void save_checkpoint(std::ostream &out, const ModelParameters &params);
void save_checkpoint(const std::filesystem::path &path, const ModelParameters &params);

/// Throws DataError on a bad magic, unsupported version or truncated file.
ModelParameters load_checkpoint(std::istream &in);
ModelParameters load_checkpoint(const std::filesystem::path &path);

} // namespace newsim
