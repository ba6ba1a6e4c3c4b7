#include "csm/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "csm/errors.hpp"
#include "csm/rng.hpp"

namespace csm {

namespace {

struct Blob {
  std::array<double, 3> center;
  std::array<double, 3> radius;
  double amplitude;
};

// Gaussian bump, evaluated only inside a 3-sigma-ish bounding box.
void render_blob(std::vector<float>& grid, const std::array<int, 3>& ext, const Blob& b) {
  const int D = ext[0], H = ext[1], W = ext[2];
  const double cut = 3.0;
  const int z0 = std::max(0, static_cast<int>(std::floor(b.center[0] - cut * b.radius[0])));
  const int z1 = std::min(D - 1, static_cast<int>(std::ceil(b.center[0] + cut * b.radius[0])));
  const int y0 = std::max(0, static_cast<int>(std::floor(b.center[1] - cut * b.radius[1])));
  const int y1 = std::min(H - 1, static_cast<int>(std::ceil(b.center[1] + cut * b.radius[1])));
  const int x0 = std::max(0, static_cast<int>(std::floor(b.center[2] - cut * b.radius[2])));
  const int x1 = std::min(W - 1, static_cast<int>(std::ceil(b.center[2] + cut * b.radius[2])));
  for (int z = z0; z <= z1; ++z) {
    const double dz = (z - b.center[0]) / b.radius[0];
    for (int y = y0; y <= y1; ++y) {
      const double dy = (y - b.center[1]) / b.radius[1];
      for (int x = x0; x <= x1; ++x) {
        const double dx = (x - b.center[2]) / b.radius[2];
        const double q = dz * dz + dy * dy + dx * dx;
        if (q > cut * cut) continue;
        grid[(static_cast<size_t>(z) * H + y) * W + x] +=
            static_cast<float>(b.amplitude * std::exp(-0.5 * q));
      }
    }
  }
}

double apply_nonlinearity(const std::string& id, double v) {
  if (id == "identity") return v;
  if (id == "tanh") return std::tanh(v);
  if (id == "square") return v * std::fabs(v);
  throw ConfigError("phantom: unknown nonlinearity '" + id + "'");
}

}  // namespace

void PhantomSpec::validate() const {
  if (series_count < 1) throw ConfigError("phantom.series_count: must be positive");
  if (patch_edge < 1 || extents[0] % patch_edge || extents[1] % patch_edge ||
      extents[2] % patch_edge)
    throw ConfigError("phantom.extents: must be divisible by patch_edge");
  if (blob_count_min < 0 || blob_count_max < blob_count_min)
    throw ConfigError("phantom.blob_count: invalid range");
  if (lesion_radius_min <= 0 || lesion_radius_max < lesion_radius_min)
    throw ConfigError("phantom.lesion_radius: invalid range");
  if (lesion_radius_factor_malignant <= 0)
    throw ConfigError("phantom.lesion_radius_factor_malignant: must be positive");
  if (!transforms.empty() && static_cast<int>(transforms.size()) != series_count)
    throw ConfigError("phantom.transforms: need one entry per series");
  for (const auto& t : transforms) {
    if (t.noise_sigma < 0) throw ConfigError("phantom.transforms.noise_sigma: must be >= 0");
    apply_nonlinearity(t.nonlinearity, 0.0);
  }
  if (class_rule != "lesion-contrast")
    throw ConfigError("phantom.class_rule: unknown rule '" + class_rule + "'");
}

std::vector<SeriesTransform> PhantomSpec::resolved_transforms() const {
  if (!transforms.empty()) return transforms;
  // Default family: linear with varied gain, one compressive series. The
  // compressive gain stays below 1 so saturation keeps structure visible.
  std::vector<SeriesTransform> out;
  for (int j = 0; j < series_count; ++j) {
    SeriesTransform t;
    if (j % 3 == 2) {
      t.gain = 0.5;
      t.nonlinearity = "tanh";
    } else {
      t.gain = 1.0 + 0.3 * (j % 3);
    }
    t.bias = 0.1 * j;
    out.push_back(t);
  }
  return out;
}

LabeledExample gen_phantom(const PhantomSpec& spec, uint64_t seed, LabelKind label_kind) {
  spec.validate();
  const auto& ext = spec.extents;
  const int64_t voxels = static_cast<int64_t>(ext[0]) * ext[1] * ext[2];
  Rng rng(mix_seed(seed, "phantom"));

  // Shared latent: background blobs everywhere, one central lesion.
  std::vector<float> latent(static_cast<size_t>(voxels), 0.0f);
  const int n_blobs = spec.blob_count_min +
                      static_cast<int>(rng.uniform_below(
                          static_cast<uint64_t>(spec.blob_count_max - spec.blob_count_min + 1)));
  for (int i = 0; i < n_blobs; ++i) {
    Blob b;
    for (int a = 0; a < 3; ++a) {
      b.center[a] = rng.uniform(0.1 * ext[a], 0.9 * ext[a]);
      b.radius[a] = rng.uniform(12.0, 22.0);
    }
    const double mag = rng.uniform(0.45, 0.95);
    b.amplitude = rng.bernoulli(0.5) ? mag : -mag;
    render_blob(latent, ext, b);
  }

  const int label = rng.bernoulli(0.5) ? 1 : 0;
  Blob lesion;
  const double radius_factor = label == 1 ? spec.lesion_radius_factor_malignant : 1.0;
  for (int a = 0; a < 3; ++a) {
    lesion.center[a] = rng.uniform(0.3 * ext[a], 0.7 * ext[a]);
    lesion.radius[a] = radius_factor * rng.uniform(spec.lesion_radius_min, spec.lesion_radius_max);
  }
  lesion.amplitude = label == 1 ? spec.lesion_amp_malignant : spec.lesion_amp_benign;
  render_blob(latent, ext, lesion);

  // Render each series from the same latent, then add independent noise.
  LabeledExample ex;
  ex.volume.subject_id = "phantom";
  ex.volume.extents = ext;
  const auto transforms = spec.resolved_transforms();
  for (int j = 0; j < spec.series_count; ++j) {
    const auto& t = transforms[static_cast<size_t>(j)];
    std::vector<float> series(static_cast<size_t>(voxels));
    Rng noise(mix_seed(seed, "noise", static_cast<uint64_t>(j)));
    for (int64_t i = 0; i < voxels; ++i) {
      double v = apply_nonlinearity(t.nonlinearity,
                                    t.gain * static_cast<double>(latent[static_cast<size_t>(i)]) +
                                        t.bias);
      if (t.noise_sigma > 0) v += t.noise_sigma * noise.normal();
      series[static_cast<size_t>(i)] = static_cast<float>(v);
    }
    ex.volume.series.push_back(std::move(series));
    ex.volume.series_names.push_back("series" + std::to_string(j));
    ex.volume.presence.push_back(1);
  }

  ex.kind = label_kind;
  if (label_kind == LabelKind::classification) {
    ex.class_label = label;
  } else if (label_kind == LabelKind::segmentation) {
    ex.mask.assign(static_cast<size_t>(voxels), 0);
    const int H = ext[1], W = ext[2];
    for (int z = 0; z < ext[0]; ++z)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const double dz = (z - lesion.center[0]) / lesion.radius[0];
          const double dy = (y - lesion.center[1]) / lesion.radius[1];
          const double dx = (x - lesion.center[2]) / lesion.radius[2];
          if (dz * dz + dy * dy + dx * dx <= 1.0)
            ex.mask[(static_cast<size_t>(z) * H + y) * W + x] = 1;
        }
  }
  ex.validate();
  return ex;
}

DatasetManifest generate_dataset(const DatasetGenConfig& config,
                                 const std::filesystem::path& out_dir) {
  config.phantom.validate();
  if (config.subjects < 3) throw ConfigError("gen.subjects: need at least 3 subjects");
  const double fsum = config.split_fractions[0] + config.split_fractions[1] +
                      config.split_fractions[2];
  if (std::fabs(fsum - 1.0) > 1e-9)
    throw ConfigError("gen.split_fractions: must sum to 1");
  std::filesystem::create_directories(out_dir);

  DatasetManifest manifest;
  manifest.label_kind = config.label_kind;
  manifest.series_count = config.phantom.series_count;
  manifest.extents = config.phantom.extents;
  manifest.root = out_dir;

  // Patient-wise split of shuffled subject indices.
  std::vector<int> order(static_cast<size_t>(config.subjects));
  for (int i = 0; i < config.subjects; ++i) order[static_cast<size_t>(i)] = i;
  Rng split_rng(mix_seed(config.seed, "split"));
  split_rng.shuffle(order);
  const int n_val = std::max(1, static_cast<int>(std::llround(config.split_fractions[1] *
                                                              config.subjects)));
  const int n_test = std::max(1, static_cast<int>(std::llround(config.split_fractions[2] *
                                                               config.subjects)));
  if (n_val + n_test >= config.subjects)
    throw ConfigError("gen.split_fractions: leave no training subjects");
  std::vector<std::string> split_of(static_cast<size_t>(config.subjects), "train");
  for (int i = 0; i < n_val; ++i) split_of[static_cast<size_t>(order[static_cast<size_t>(i)])] = "val";
  for (int i = n_val; i < n_val + n_test; ++i)
    split_of[static_cast<size_t>(order[static_cast<size_t>(i)])] = "test";

  for (int i = 0; i < config.subjects; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "s%04d", i);
    LabeledExample ex =
        gen_phantom(config.phantom, mix_seed(config.seed, "subject", static_cast<uint64_t>(i)),
                    config.label_kind);
    ex.volume.subject_id = id;

    SubjectRecord rec;
    rec.id = id;
    rec.file = std::string(id) + ".msvol";
    rec.split = split_of[static_cast<size_t>(i)];
    save_volume(ex.volume, out_dir / rec.file);
    if (config.label_kind == LabelKind::classification) {
      rec.class_label = ex.class_label;
    } else if (config.label_kind == LabelKind::segmentation) {
      MultiSeriesVolume mv = MultiSeriesVolume::zeros(std::string(id) + "-mask",
                                                      config.phantom.extents, 1);
      for (size_t vi = 0; vi < ex.mask.size(); ++vi)
        mv.series[0][vi] = static_cast<float>(ex.mask[vi]);
      rec.mask_file = std::string(id) + ".mask.msvol";
      save_volume(mv, out_dir / rec.mask_file);
    }
    manifest.subjects.push_back(std::move(rec));
  }

  save_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

}  // namespace csm
