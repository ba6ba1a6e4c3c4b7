#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "csm/masking.hpp"
#include "csm/volume.hpp"

namespace csm {

// 2|a n b| / (|a| + |b|); two empty masks count as perfect overlap.
double dice_score(std::span<const uint8_t> a, std::span<const uint8_t> b);

// Mann-Whitney AUC: probability a random positive outscores a random
// negative, ties credited one half. Requires both classes present.
double auc(std::span<const double> scores, std::span<const int> labels);

// Constant-predictor floor for reconstruction quality: each eligible masked
// voxel is predicted by the per-series mean of the subject's visible voxels
// (falling back to the subject-wide visible mean for fully-hidden series).
// Pooled over all eligible voxels of all subjects.
double mean_baseline_mse(const std::vector<TokenGrid>& subjects,
                         const std::vector<MaskPlan>& plans, const MaskConfig& config);

}  // namespace csm
