#pragma once

#include <filesystem>

#include "csm/cli.hpp"
#include "csm/config.hpp"

namespace csm {

// Runs the six-arm masking-variant grid, one pretrain plus `ablation.seeds`
// finetunes per arm, all arms sharing the dataset and seed lineage so the
// masking axes are the only difference. Emits an aligned text table and
// report.json under run_dir.
AblationReport run_ablation(const ExperimentConfig& config,
                            const std::filesystem::path& run_dir);

}  // namespace csm
