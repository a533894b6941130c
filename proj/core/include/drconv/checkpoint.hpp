#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "drconv/model.hpp"

namespace drconv {

// Checkpoint layout, all integers little-endian:
//   [0, 8)    magic "DRCVCKPT"
//   [8, 12)   u32 format version (kCheckpointVersion)
//   [12, 20)  u64 manifest length L
//   [20, 20+L) manifest JSON: {"model": <model config>,
//              "params": [{"module", "name", "count"}, ...]}
//   then every parameter array in manifest order as f64 values
// and nothing after the last value.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const Model& model);
Model deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace drconv
