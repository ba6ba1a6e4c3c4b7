#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "csm/config.hpp"
#include "csm/pretrain.hpp"
#include "csm/taskloss.hpp"

namespace csm {

// Zeroes absent series in place (presence flags untouched); present series
// are never modified. Requires at least one present series.
MultiSeriesVolume pad_missing_series(const MultiSeriesVolume& volume);

enum class TaskKind { classification, segmentation };

std::string task_kind_name(TaskKind kind);
TaskKind task_kind_from_name(const std::string& name);

// Task head parameters. Classification pools encoder tokens (mean over all
// series and positions) into two logits; segmentation maps each token to
// p^3 voxel scores, averaged across series and reassembled to a voxel mask.
template <typename T>
struct TaskHead {
  TaskKind kind;
  Parameter<T> w;
  Parameter<T> b;

  TaskHead(TaskKind k, const ModelConfig& cfg, uint64_t seed)
      : kind(k),
        w("task." + std::string(k == TaskKind::classification ? "cls" : "seg") + ".w",
          Tensor<T>({cfg.d_enc, k == TaskKind::classification ? 2 : cfg.patch_volume()})),
        b("task." + std::string(k == TaskKind::classification ? "cls" : "seg") + ".b",
          Tensor<T>({k == TaskKind::classification ? 2 : cfg.patch_volume()})) {
    Rng rng(mix_seed(seed, "head-init"));
    for (auto& v : w.value.values) v = static_cast<T>(rng.normal(0.0, 0.02));
  }

  std::vector<Parameter<T>*> parameters() { return {&w, &b}; }
};

struct SplitMetrics {
  double value = 0.0;  // auc or mean dice
  int64_t count = 0;
};

struct FinetuneOutputs {
  TrainLog log;
  std::filesystem::path checkpoint;
  std::map<std::string, SplitMetrics> metrics;  // per split
  std::string metric_name;                      // "auc" | "dice"
  int64_t train_subjects = 0;
};

struct FinetuneRuntimeOptions {
  bool skip_checkpoint = false;
};

// Downstream adaptation: encoder initialized from the checkpoint (or random
// when none is configured), all tokens visible, task loss averaged over the
// batch, Adam on the cosine schedule. Reports val/test metrics.
FinetuneOutputs run_finetune(const ExperimentConfig& config,
                             const std::filesystem::path& run_dir,
                             const FinetuneRuntimeOptions& options = {});

// Forward-only evaluation of a finetuned checkpoint over manifest splits.
struct EvalOutputs {
  std::map<std::string, SplitMetrics> metrics;
  std::string metric_name;
  std::string task;
  std::string config_hash;  // hash recorded in the checkpoint
  uint64_t seed = 0;
};

EvalOutputs run_eval(const ExperimentConfig& config);

void write_metrics_json(const FinetuneOutputs& out, const std::string& config_hash,
                        uint64_t seed, const std::filesystem::path& path);
void write_metrics_json(const EvalOutputs& out, const std::filesystem::path& path);

}  // namespace csm
