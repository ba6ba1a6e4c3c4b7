#include "csm/dataset.hpp"

#include <fstream>

#include "json.hpp"

#include "csm/errors.hpp"

namespace csm {

using nlohmann::json;

std::string label_kind_name(LabelKind kind) {
  switch (kind) {
    case LabelKind::none: return "none";
    case LabelKind::classification: return "classification";
    case LabelKind::segmentation: return "segmentation";
  }
  throw UsageError("unknown label kind");
}

LabelKind label_kind_from_name(const std::string& name) {
  if (name == "none") return LabelKind::none;
  if (name == "classification") return LabelKind::classification;
  if (name == "segmentation") return LabelKind::segmentation;
  throw ConfigError("label_kind: expected none|classification|segmentation, got '" + name + "'");
}

std::vector<const SubjectRecord*> DatasetManifest::split(const std::string& name) const {
  std::vector<const SubjectRecord*> out;
  for (const auto& s : subjects)
    if (s.split == name) out.push_back(&s);
  return out;
}

void DatasetManifest::validate() const {
  if (subjects.empty()) throw ConfigError("manifest: no subjects");
  if (series_count < 1) throw ConfigError("manifest: series_count must be positive");
  for (const auto& s : subjects) {
    if (s.split != "train" && s.split != "val" && s.split != "test")
      throw ConfigError("manifest: subject " + s.id + " has invalid split '" + s.split + "'");
    if (label_kind == LabelKind::classification && s.class_label != 0 && s.class_label != 1)
      throw ConfigError("manifest: subject " + s.id + " missing a binary class label");
    if (label_kind == LabelKind::segmentation && s.mask_file.empty())
      throw ConfigError("manifest: subject " + s.id + " missing a mask file");
  }
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  manifest.validate();
  json j;
  j["format"] = "csm-dataset";
  j["version"] = manifest.version;
  j["label_kind"] = label_kind_name(manifest.label_kind);
  j["series_count"] = manifest.series_count;
  j["extents"] = manifest.extents;
  json subs = json::array();
  for (const auto& s : manifest.subjects) {
    json e;
    e["id"] = s.id;
    e["file"] = s.file;
    e["split"] = s.split;
    if (!s.mask_file.empty()) e["mask_file"] = s.mask_file;
    if (s.class_label >= 0) e["class_label"] = s.class_label;
    subs.push_back(std::move(e));
  }
  j["subjects"] = std::move(subs);
  std::ofstream out(path);
  if (!out) throw IoError("save_manifest: cannot open " + path.string());
  out << j.dump(2) << "\n";
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_manifest: cannot open " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("load_manifest: invalid JSON in " + path.string());
  DatasetManifest m;
  try {
    if (j.at("format").get<std::string>() != "csm-dataset" || j.at("version").get<int>() != 1)
      throw ConfigError("load_manifest: unsupported format/version");
    m.label_kind = label_kind_from_name(j.at("label_kind").get<std::string>());
    m.series_count = j.at("series_count").get<int>();
    auto ext = j.at("extents").get<std::vector<int>>();
    if (ext.size() != 3) throw ConfigError("load_manifest: extents must have 3 entries");
    m.extents = {ext[0], ext[1], ext[2]};
    for (const auto& e : j.at("subjects")) {
      SubjectRecord r;
      r.id = e.at("id").get<std::string>();
      r.file = e.at("file").get<std::string>();
      r.split = e.at("split").get<std::string>();
      if (e.contains("mask_file")) r.mask_file = e.at("mask_file").get<std::string>();
      if (e.contains("class_label")) r.class_label = e.at("class_label").get<int>();
      m.subjects.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw ConfigError("load_manifest: bad field in " + path.string() + ": " + e.what());
  }
  m.root = path.parent_path();
  m.validate();
  return m;
}

void LabeledExample::validate() const {
  volume.validate();
  if (kind == LabelKind::classification && class_label != 0 && class_label != 1)
    throw UsageError("labeled example: classification label must be 0 or 1");
  if (kind == LabelKind::segmentation) {
    if (static_cast<int64_t>(mask.size()) != volume.voxels_per_series())
      throw UsageError("labeled example: mask extent mismatch");
    for (uint8_t v : mask)
      if (v > 1) throw UsageError("labeled example: mask must be binary");
  }
}

LabeledExample load_example(const DatasetManifest& manifest, const SubjectRecord& record,
                            bool normalize) {
  LabeledExample ex;
  ex.volume = load_volume(manifest.root / record.file);
  if (normalize) normalize_per_series(ex.volume);
  ex.kind = manifest.label_kind;
  if (manifest.label_kind == LabelKind::classification) {
    ex.class_label = record.class_label;
  } else if (manifest.label_kind == LabelKind::segmentation) {
    MultiSeriesVolume mv = load_volume(manifest.root / record.mask_file);
    if (mv.extents != ex.volume.extents)
      throw UsageError("load_example: mask extents differ from volume for " + record.id);
    ex.mask.resize(mv.series[0].size());
    for (size_t i = 0; i < ex.mask.size(); ++i) ex.mask[i] = mv.series[0][i] > 0.5f ? 1 : 0;
  }
  ex.validate();
  return ex;
}

}  // namespace csm
