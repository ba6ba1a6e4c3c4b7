#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "csm/errors.hpp"
#include "csm/tensor.hpp"

namespace csm {

// A subject's aligned 3D series. Extents are (D, H, W) in (z, y, x) order;
// voxel index = (z * H + y) * W + x. Absent series are all-zero grids with
// presence = false.
struct MultiSeriesVolume {
  std::string subject_id;
  std::array<int, 3> extents{0, 0, 0};
  std::vector<std::string> series_names;
  std::vector<uint8_t> presence;
  std::vector<std::vector<float>> series;

  int series_count() const { return static_cast<int>(series.size()); }
  int64_t voxels_per_series() const {
    return static_cast<int64_t>(extents[0]) * extents[1] * extents[2];
  }
  int present_count() const {
    int n = 0;
    for (uint8_t p : presence) n += p ? 1 : 0;
    return n;
  }
  void validate() const;

  static MultiSeriesVolume zeros(std::string id, std::array<int, 3> extents, int series_count);
};

// Per-series token matrix: N rows of p^3 voxel values, token row j maps to
// grid coordinate (gz, gy, gx) with j = (gz * GH + gy) * GW + gx, and column
// c maps to the in-patch offset (dz, dy, dx) with c = (dz * p + dy) * p + dx.
struct TokenGrid {
  std::string subject_id;
  int patch_edge = 0;
  std::array<int, 3> grid_dims{0, 0, 0};  // (GD, GH, GW)
  std::vector<uint8_t> presence;
  std::vector<TensorF> tokens;  // per series, shape (N, p^3)

  int series_count() const { return static_cast<int>(tokens.size()); }
  int64_t tokens_per_series() const {
    return static_cast<int64_t>(grid_dims[0]) * grid_dims[1] * grid_dims[2];
  }
  int64_t patch_volume() const {
    return static_cast<int64_t>(patch_edge) * patch_edge * patch_edge;
  }
  std::array<int, 3> volume_extents() const {
    return {grid_dims[0] * patch_edge, grid_dims[1] * patch_edge, grid_dims[2] * patch_edge};
  }

  std::array<int, 3> decode_token(int64_t row) const {
    const int64_t gh = grid_dims[1], gw = grid_dims[2];
    return {static_cast<int>(row / (gh * gw)), static_cast<int>((row / gw) % gh),
            static_cast<int>(row % gw)};
  }
};

TokenGrid patchify(const MultiSeriesVolume& volume, int patch_edge);
MultiSeriesVolume unpatchify(const TokenGrid& tokens);

// Patchify a single grid: out (N, p^3). Used for segmentation targets too.
TensorF patchify_grid(const std::vector<float>& grid, const std::array<int, 3>& extents,
                      int patch_edge);
std::vector<float> unpatchify_grid(const TensorF& tokens, const std::array<int, 3>& grid_dims,
                                   int patch_edge);

// File format: one JSON header line terminated by '\n', followed by one
// little-endian f32 payload of D*H*W voxels per series, concatenated in
// series order. The header carries extents, series names, presence flags,
// voxel precision and a format version.
void save_volume(const MultiSeriesVolume& volume, const std::filesystem::path& path);
MultiSeriesVolume load_volume(const std::filesystem::path& path);

// Zero-mean / unit-variance per present series, in place. Series with
// near-zero variance are centered only.
void normalize_per_series(MultiSeriesVolume& volume);

}  // namespace csm
