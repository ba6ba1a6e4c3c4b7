#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "csm/volume.hpp"

namespace csm {

enum class LabelKind { none, classification, segmentation };

std::string label_kind_name(LabelKind kind);
LabelKind label_kind_from_name(const std::string& name);

struct SubjectRecord {
  std::string id;
  std::string file;       // volume path, relative to the manifest directory
  std::string mask_file;  // segmentation label volume; empty when unused
  int class_label = -1;   // 0/1 for classification; -1 when unused
  std::string split;      // train | val | test
};

struct DatasetManifest {
  int version = 1;
  LabelKind label_kind = LabelKind::none;
  int series_count = 0;
  std::array<int, 3> extents{0, 0, 0};
  std::vector<SubjectRecord> subjects;
  std::filesystem::path root;  // directory holding the manifest

  std::vector<const SubjectRecord*> split(const std::string& name) const;
  void validate() const;
};

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

struct LabeledExample {
  MultiSeriesVolume volume;
  LabelKind kind = LabelKind::none;
  int class_label = -1;
  std::vector<uint8_t> mask;  // voxel mask, same extents as the volume

  void validate() const;
};

LabeledExample load_example(const DatasetManifest& manifest, const SubjectRecord& record,
                            bool normalize);

}  // namespace csm
