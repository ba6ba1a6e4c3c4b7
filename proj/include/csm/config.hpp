#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "csm/masking.hpp"
#include "csm/model.hpp"
#include "csm/phantom.hpp"

namespace csm {

struct PretrainSection {
  int64_t steps = 2000;
  int batch_size = 6;
  double base_lr = 1e-3;
  double min_lr = 5e-5;
  double weight_decay = 0.01;
  bool coupled_weight_decay = false;
  int64_t checkpoint_every = 500;
  int64_t warmup_steps = 0;
  bool augment_flips = false;
  std::vector<int> crop_extents;  // empty: no crop; else a jittered window
  std::string resume_from;
};

struct FinetuneSection {
  std::string checkpoint;  // empty: random initialization
  std::string task = "classification";
  int64_t steps = 300;
  int batch_size = 6;
  double base_lr = 5e-3;
  double min_lr = 0.0;
  double weight_decay = 0.01;
  bool coupled_weight_decay = false;
  double labeling_ratio = 1.0;
  bool freeze_encoder = false;
  int drop_series_min = 0;  // simulated missing series per subject
  int drop_series_max = 0;
  uint64_t drop_seed = 1234;
};

struct EvalSection {
  std::string checkpoint;
  std::vector<std::string> splits{"val", "test"};
};

struct GenSection {
  int subjects = 200;
  std::string label_kind = "classification";
  std::array<double, 3> split_fractions{0.8, 0.1, 0.1};
  PhantomSpec phantom;
};

struct AblationSection {
  int seeds = 3;
  int64_t pretrain_steps = -1;  // -1: inherit pretrain.steps
  int64_t finetune_steps = -1;  // -1: inherit finetune.steps
};

struct GradcheckSection {
  double eps = 1e-5;
};

// The whole experiment document. Parsing is strict (unknown keys are
// configuration errors naming the field path) and resolution is idempotent:
// the resolved form re-parses to an identical hash.
struct ExperimentConfig {
  std::string run_dir;
  uint64_t seed = 1;
  bool deterministic = true;
  std::string manifest;
  bool normalize = true;
  ModelConfig model;
  MaskConfig mask;
  PretrainSection pretrain;
  FinetuneSection finetune;
  EvalSection eval;
  GenSection gen;
  AblationSection ablation;
  GradcheckSection gradcheck;

  std::string to_json_string() const;  // canonical resolved form
  std::string hash() const;            // fnv1a-64 hex of the canonical form
};

ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text);

uint64_t fnv1a64(std::string_view data);
std::string fnv1a64_hex(std::string_view data);

}  // namespace csm
