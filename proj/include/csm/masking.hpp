#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "csm/errors.hpp"
#include "csm/rng.hpp"

namespace csm {

// Cross-series masking controls. intra_ratio hides a fixed fraction of each
// series' tokens; inter_prob is the per-step probability of additionally
// hiding whole series. The two ablation switches map to the variant grid:
// same_position copies one intra mask to every series, series_mask_enabled
// turns whole-series masking off, reconstruct_masked_series=false hides
// whole series from the encoder but excludes them from the loss.
struct MaskConfig {
  double intra_ratio = 0.875;
  double inter_prob = 0.5;
  bool same_position = false;
  bool series_mask_enabled = true;
  bool reconstruct_masked_series = true;

  void validate(int series_count, int tokens_per_series) const;
};

// A sampled plan: per-series sorted masked token sets, the fully-masked
// series set, and series that are absent from the subject altogether.
// At least one series always stays visible.
struct MaskPlan {
  int series_count = 0;
  int tokens_per_series = 0;
  std::vector<std::vector<int>> masked;  // sorted per series
  std::vector<int> fully_masked;         // S_m, sorted; these reconstruct
  std::vector<int> absent;               // padded-away series, never in loss

  int k() const { return static_cast<int>(fully_masked.size()); }
  bool is_fully_masked(int series) const;
  bool is_absent(int series) const;
  std::vector<int> unmasked(int series) const;
  // Series whose masked tokens enter the reconstruction loss.
  bool loss_eligible(int series, const MaskConfig& config) const;
  void validate() const;

  std::string to_json_string() const;
  static MaskPlan from_json_string(const std::string& text);
};

// Uniform without-replacement subset of size floor(rho * N), sorted.
std::vector<int> sample_intra_mask(int tokens_per_series, double rho, Rng& rng);

// k uniform on {1..s-1}, then a uniform k-subset of series, sorted.
std::vector<int> sample_inter_mask(int series_count, Rng& rng);

// Combines the two strategies: with probability inter_prob (when enabled)
// whole series are hidden, and every remaining series gets an independent
// intra mask (or one shared mask when same_position is set). Absent series
// are always fully hidden and never loss-eligible.
MaskPlan sample_mask_plan(int series_count, int tokens_per_series, const MaskConfig& config,
                          Rng& rng, const std::vector<uint8_t>* presence = nullptr);

// (sum_j |P_m[j]|) / (s * N)
double masked_voxel_fraction(const MaskPlan& plan);

}  // namespace csm
