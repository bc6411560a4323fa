#pragma once

#include <filesystem>
#include <iosfwd>

#include "mpre/cohort.hpp"
#include "mpre/model.hpp"

namespace mpre::checkpoint {

// Binary layout, all integers and floats little-endian:
//   magic "MPRECKPT", u32 version
//   config: u64 t_max, c, s, d; i32 symlet order; u64 kernel width;
//           u64 dilations[3]; u8 trend, variation, men2d, fodam, shared
//   u32 tensor count, then per tensor: u32 rank, u64 dims[rank], f64 values
//   u32 stats count (4), then dynamic mean/std and static mean/std as tensors
inline constexpr char kMagic[8] = {'M', 'P', 'R', 'E', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kVersion = 1;

struct Checkpoint {
  model::ModelConfig config;
  model::ModelParams params;
  data::NormalizationStats stats;
};

void write(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read(std::istream& in);

void save(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load(const std::filesystem::path& path);

}  // namespace mpre::checkpoint
