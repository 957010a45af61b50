#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cbxt/layers.hpp"

namespace cbxt {

struct CheckpointParam {
  std::string name;
  ParamTag tag = ParamTag::base;
  std::vector<int> shape;
  std::vector<double> data;
};

// Binary model snapshot. Layout: magic "CBXT", u32 version, u32 param count,
// then per parameter u16 name length + name, u8 tag, u8 rank, u32 dims,
// raw little-endian doubles; the effective config text follows the
// parameters as u32 length + bytes. Round trips are bit-exact.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  std::vector<CheckpointParam> params;
  std::string config_text;

  static Checkpoint from_registry(const ParamRegistry& reg, const std::string& config_text);
  // Copies stored values into matching registry tensors. Unknown parameter
  // names, shape disagreements, and tag disagreements are load errors.
  void apply_to(ParamRegistry& reg) const;
  const CheckpointParam* find(const std::string& name) const;
};

// Written atomically (temp file + rename).
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace cbxt
