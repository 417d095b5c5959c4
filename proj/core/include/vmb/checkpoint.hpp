#pragma once

#include <filesystem>
#include <optional>

#include "vmb/conditioning.hpp"
#include "vmb/dit.hpp"

namespace vmb {

// A trained (or freshly initialized) generator: configuration, base and
// stylization tensors, and the optional control branch.
struct Checkpoint {
  ModelConfig config;
  Parameters params;  // "base.*" and "style.*" tensors
  std::optional<ControlFormerState> control;
};

// "VMBC" named-tensor container: magic, version u16, config block, tensor
// count u64, then per tensor {name len u16, name, rows u32, cols u32,
// row-major little-endian f32 payload}, sorted by name. Control tensors are
// stored under their "control." prefix.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

}  // namespace vmb
