#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "csm/dataset.hpp"
#include "csm/volume.hpp"

namespace csm {

struct SeriesTransform {
  double gain = 1.0;
  double bias = 0.0;
  std::string nonlinearity = "identity";  // identity | tanh | square
  double noise_sigma = 0.03;
};

// Synthetic multi-series subject: a shared latent field of smooth blobs plus
// one lesion whose contrast encodes the class; each series renders the same
// latent through its own transform and independent noise, so every series is
// predictable from the others up to noise.
struct PhantomSpec {
  std::array<int, 3> extents{48, 48, 48};
  int series_count = 3;
  int patch_edge = 16;
  int blob_count_min = 4;
  int blob_count_max = 8;
  std::vector<SeriesTransform> transforms;  // defaulted to series_count entries
  std::string class_rule = "lesion-contrast";
  double lesion_radius_min = 5.0;
  double lesion_radius_max = 8.0;
  double lesion_radius_factor_malignant = 1.3;
  double lesion_amp_benign = 0.5;
  double lesion_amp_malignant = 2.5;

  void validate() const;
  std::vector<SeriesTransform> resolved_transforms() const;
};

LabeledExample gen_phantom(const PhantomSpec& spec, uint64_t seed, LabelKind label_kind);

struct DatasetGenConfig {
  PhantomSpec phantom;
  int subjects = 200;
  LabelKind label_kind = LabelKind::classification;
  std::array<double, 3> split_fractions{0.8, 0.1, 0.1};
  uint64_t seed = 1;
};

// Writes one volume file per subject (plus mask files for segmentation) and
// a manifest with patient-wise train/val/test splits.
DatasetManifest generate_dataset(const DatasetGenConfig& config,
                                 const std::filesystem::path& out_dir);

}  // namespace csm
