#pragma once

// Checkpoint archive, format tag "m2s-ckpt/1":
//
//   "m2s-ckpt/1\n"
//   u32 metadata length, metadata bytes (JSON text)
//   u32 entry count, then per entry:
//     u32 name length, name bytes (dotted parameter name)
//     u32 kind (0 = learnable, 1 = frozen buffer)
//     u32 rank, rank x u32 extents
//     float32 values, row-major
//
// All integers and floats are little-endian.

#include <filesystem>
#include <string>
#include <vector>

#include "m2s/nn.hpp"

namespace m2s {

inline constexpr const char* kCheckpointFormat = "m2s-ckpt/1";

struct CheckpointEntry {
  std::string name;
  bool frozen = false;
  Tensor values;
};

struct Checkpoint {
  std::string metadata;
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store,
                     const std::string& metadata);
Checkpoint read_checkpoint(const std::filesystem::path& path);
/// Copies every entry into the matching store tensor; a missing name or a
/// shape mismatch is an IoError.
void restore_parameters(ParamStore& store, const Checkpoint& ckpt);

}  // namespace m2s
