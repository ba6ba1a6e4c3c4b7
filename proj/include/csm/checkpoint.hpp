#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "csm/model.hpp"
#include "csm/optim.hpp"

namespace csm {

struct CheckpointMeta {
  int version = 1;
  std::string task = "none";  // none | classification | segmentation
  ModelConfig model;
  uint64_t seed = 0;
  int64_t step = 0;
  std::string config_hash;
  int64_t adam_t = -1;  // -1 when no optimizer state is stored
};

// Versioned JSON header line plus named little-endian f32 blobs. Loading is
// strict: the blob name set must match the expectation exactly.
void save_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta,
                     const std::vector<Parameter<float>*>& params,
                     const AdamState<float>* adam);

struct LoadedCheckpoint {
  CheckpointMeta meta;
  std::vector<std::pair<std::string, TensorF>> blobs;  // in file order

  const TensorF& blob(const std::string& name) const;
  bool has_blob(const std::string& name) const;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Copies blob values into the given parameters (and Adam moments when
// expect_adam). Unknown or missing names, or shape mismatches, are errors.
void apply_checkpoint_strict(const LoadedCheckpoint& ckpt,
                             const std::vector<Parameter<float>*>& params,
                             AdamState<float>* adam);

}  // namespace csm
