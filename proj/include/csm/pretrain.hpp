#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "csm/checkpoint.hpp"
#include "csm/config.hpp"
#include "csm/dataset.hpp"
#include "csm/model.hpp"

namespace csm {

struct TrainLogRecord {
  int64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double masked_voxel_fraction = 0.0;
  double wall_ms = 0.0;
  int64_t epoch = 0;
};

struct TrainLog {
  std::string run_id;
  std::string config_hash;
  std::vector<TrainLogRecord> records;
};

void write_trainlog_ndjson(const TrainLog& log, const std::filesystem::path& path);
TrainLog read_trainlog_ndjson(const std::filesystem::path& path);

// Volumes pre-loaded and normalized once; flips and patchify run per step.
struct SubjectData {
  std::string id;
  MultiSeriesVolume volume;
  int class_label = -1;
  std::vector<uint8_t> mask;
};

std::vector<SubjectData> load_split(const DatasetManifest& manifest, const std::string& split,
                                    bool normalize);

// Axis flips applied identically to every series of the subject.
MultiSeriesVolume flip_volume(const MultiSeriesVolume& v, bool flip_z, bool flip_y, bool flip_x);

// Window crop at the given corner, applied identically to every series.
MultiSeriesVolume crop_volume(const MultiSeriesVolume& v, const std::array<int, 3>& corner,
                              const std::array<int, 3>& extents);

struct PretrainOutputs {
  TrainLog log;
  std::filesystem::path final_checkpoint;
  double heldout_mse = 0.0;
  double heldout_baseline_mse = 0.0;
  int64_t heldout_subjects = 0;
};

struct PretrainRuntimeOptions {
  bool dump_plans = false;  // write maskplans/*.json per step and subject
  int64_t dump_plans_max_step = INT64_MAX;
};

// The self-supervised loop: per step sample a batch, a mask plan per subject,
// run the masked-reconstruction objective, and take one Adam step on the
// cosine schedule. Deterministic given (config, seed): all randomness is
// derived from counters, so resuming from a checkpoint reproduces the
// uninterrupted trajectory.
PretrainOutputs run_pretrain(const ExperimentConfig& config,
                             const std::filesystem::path& run_dir,
                             const PretrainRuntimeOptions& options = {});

// Masked-reconstruction MSE of the model on held-out subjects, with plans
// derived from eval_seed; pooled over eligible voxels. The paired baseline
// uses the same plans.
struct HeldoutEval {
  double model_mse = 0.0;
  double baseline_mse = 0.0;
  int64_t subjects = 0;
};

HeldoutEval eval_masked_reconstruction(CsmModel<float>& model, const MaskConfig& mask,
                                       const std::vector<SubjectData>& subjects,
                                       uint64_t eval_seed);

}  // namespace csm
