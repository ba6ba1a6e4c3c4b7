#include "csm/volume.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace csm {

using nlohmann::json;

void MultiSeriesVolume::validate() const {
  if (series.empty()) throw UsageError("volume " + subject_id + ": no series");
  if (presence.size() != series.size() || series_names.size() != series.size())
    throw UsageError("volume " + subject_id + ": metadata length mismatch");
  const int64_t n = voxels_per_series();
  if (n <= 0) throw UsageError("volume " + subject_id + ": empty extents");
  for (size_t j = 0; j < series.size(); ++j) {
    if (static_cast<int64_t>(series[j].size()) != n)
      throw UsageError("volume " + subject_id + ": series " + std::to_string(j) +
                       " has wrong voxel count");
    for (float v : series[j])
      if (!std::isfinite(v))
        throw NumericError("volume " + subject_id + ": non-finite voxel in series " +
                           std::to_string(j));
  }
}

MultiSeriesVolume MultiSeriesVolume::zeros(std::string id, std::array<int, 3> extents,
                                           int series_count) {
  MultiSeriesVolume v;
  v.subject_id = std::move(id);
  v.extents = extents;
  v.presence.assign(static_cast<size_t>(series_count), 1);
  for (int j = 0; j < series_count; ++j) {
    v.series_names.push_back("series" + std::to_string(j));
    v.series.emplace_back(static_cast<size_t>(v.voxels_per_series()), 0.0f);
  }
  return v;
}

TensorF patchify_grid(const std::vector<float>& grid, const std::array<int, 3>& extents,
                      int patch_edge) {
  const int p = patch_edge;
  const int D = extents[0], H = extents[1], W = extents[2];
  if (p <= 0 || D % p || H % p || W % p)
    throw ConfigError("patchify: extents " + std::to_string(D) + "x" + std::to_string(H) + "x" +
                      std::to_string(W) + " not divisible by patch edge " + std::to_string(p));
  const int gd = D / p, gh = H / p, gw = W / p;
  const int64_t n_tokens = static_cast<int64_t>(gd) * gh * gw;
  const int64_t pv = static_cast<int64_t>(p) * p * p;
  TensorF out({n_tokens, pv});
  for (int gz = 0; gz < gd; ++gz)
    for (int gy = 0; gy < gh; ++gy)
      for (int gx = 0; gx < gw; ++gx) {
        const int64_t row = (static_cast<int64_t>(gz) * gh + gy) * gw + gx;
        float* dst = out.values.data() + row * pv;
        for (int dz = 0; dz < p; ++dz)
          for (int dy = 0; dy < p; ++dy) {
            const int64_t src =
                (static_cast<int64_t>(gz * p + dz) * H + (gy * p + dy)) * W + gx * p;
            std::memcpy(dst + (static_cast<int64_t>(dz) * p + dy) * p, grid.data() + src,
                        sizeof(float) * static_cast<size_t>(p));
          }
      }
  return out;
}

std::vector<float> unpatchify_grid(const TensorF& tokens, const std::array<int, 3>& grid_dims,
                                   int patch_edge) {
  const int p = patch_edge;
  const int gd = grid_dims[0], gh = grid_dims[1], gw = grid_dims[2];
  const int64_t n_tokens = static_cast<int64_t>(gd) * gh * gw;
  const int64_t pv = static_cast<int64_t>(p) * p * p;
  if (tokens.rows() != n_tokens || tokens.cols() != pv)
    throw UsageError("unpatchify: token shape inconsistent with grid dims");
  const int H = gh * p, W = gw * p;
  std::vector<float> grid(static_cast<size_t>(n_tokens * pv));
  for (int gz = 0; gz < gd; ++gz)
    for (int gy = 0; gy < gh; ++gy)
      for (int gx = 0; gx < gw; ++gx) {
        const int64_t row = (static_cast<int64_t>(gz) * gh + gy) * gw + gx;
        const float* src = tokens.values.data() + row * pv;
        for (int dz = 0; dz < p; ++dz)
          for (int dy = 0; dy < p; ++dy) {
            const int64_t dst =
                (static_cast<int64_t>(gz * p + dz) * H + (gy * p + dy)) * W + gx * p;
            std::memcpy(grid.data() + dst, src + (static_cast<int64_t>(dz) * p + dy) * p,
                        sizeof(float) * static_cast<size_t>(p));
          }
      }
  return grid;
}

TokenGrid patchify(const MultiSeriesVolume& volume, int patch_edge) {
  volume.validate();
  TokenGrid out;
  out.subject_id = volume.subject_id;
  out.patch_edge = patch_edge;
  const int p = patch_edge;
  if (p <= 0 || volume.extents[0] % p || volume.extents[1] % p || volume.extents[2] % p)
    throw ConfigError("patchify: extents not divisible by patch edge " + std::to_string(p));
  out.grid_dims = {volume.extents[0] / p, volume.extents[1] / p, volume.extents[2] / p};
  out.presence = volume.presence;
  for (const auto& s : volume.series) out.tokens.push_back(patchify_grid(s, volume.extents, p));
  return out;
}

MultiSeriesVolume unpatchify(const TokenGrid& tokens) {
  MultiSeriesVolume out;
  out.subject_id = tokens.subject_id;
  out.extents = tokens.volume_extents();
  out.presence = tokens.presence;
  for (size_t j = 0; j < tokens.tokens.size(); ++j) {
    out.series_names.push_back("series" + std::to_string(j));
    out.series.push_back(unpatchify_grid(tokens.tokens[j], tokens.grid_dims, tokens.patch_edge));
  }
  return out;
}

void save_volume(const MultiSeriesVolume& volume, const std::filesystem::path& path) {
  volume.validate();
  json header;
  header["format"] = "msvol";
  header["version"] = 1;
  header["subject_id"] = volume.subject_id;
  header["extents"] = volume.extents;
  header["series_count"] = volume.series_count();
  header["series_names"] = volume.series_names;
  header["presence"] = std::vector<int>(volume.presence.begin(), volume.presence.end());
  header["voxel_precision"] = "f32";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_volume: cannot open " + path.string());
  out << header.dump() << "\n";
  for (const auto& s : volume.series)
    out.write(reinterpret_cast<const char*>(s.data()),
              static_cast<std::streamsize>(s.size() * sizeof(float)));
  if (!out) throw IoError("save_volume: write failed for " + path.string());
}

MultiSeriesVolume load_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_volume: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw MalformedHeaderError("load_volume: missing header line in " + path.string());
  json header = json::parse(line, nullptr, false);
  if (header.is_discarded())
    throw MalformedHeaderError("load_volume: header is not valid JSON in " + path.string());

  MultiSeriesVolume v;
  try {
    if (header.at("format").get<std::string>() != "msvol" || header.at("version").get<int>() != 1)
      throw MalformedHeaderError("load_volume: unsupported format/version in " + path.string());
    if (header.at("voxel_precision").get<std::string>() != "f32")
      throw MalformedHeaderError("load_volume: unsupported voxel precision in " + path.string());
    v.subject_id = header.at("subject_id").get<std::string>();
    auto ext = header.at("extents").get<std::vector<int>>();
    if (ext.size() != 3) throw MalformedHeaderError("load_volume: extents must have 3 entries");
    v.extents = {ext[0], ext[1], ext[2]};
    const int s = header.at("series_count").get<int>();
    v.series_names = header.at("series_names").get<std::vector<std::string>>();
    auto presence = header.at("presence").get<std::vector<int>>();
    if (s <= 0 || static_cast<int>(v.series_names.size()) != s ||
        static_cast<int>(presence.size()) != s)
      throw MalformedHeaderError("load_volume: inconsistent series metadata in " + path.string());
    v.presence.assign(presence.begin(), presence.end());
  } catch (const json::exception& e) {
    throw MalformedHeaderError("load_volume: bad header field in " + path.string() + ": " +
                               e.what());
  }

  const int64_t n = v.voxels_per_series();
  if (n <= 0) throw MalformedHeaderError("load_volume: non-positive extents in " + path.string());
  for (int j = 0; j < static_cast<int>(v.series_names.size()); ++j) {
    std::vector<float> grid(static_cast<size_t>(n));
    in.read(reinterpret_cast<char*>(grid.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(n * sizeof(float)))
      throw TruncatedPayloadError("load_volume: payload truncated at series " + std::to_string(j) +
                                  " of " + path.string());
    v.series.push_back(std::move(grid));
  }
  in.peek();
  if (!in.eof())
    throw PayloadSizeMismatchError("load_volume: trailing bytes after declared payload in " +
                                   path.string());
  // Absent series are zero by contract regardless of stored bytes.
  for (size_t j = 0; j < v.series.size(); ++j)
    if (!v.presence[j]) std::fill(v.series[j].begin(), v.series[j].end(), 0.0f);
  v.validate();
  return v;
}

void normalize_per_series(MultiSeriesVolume& volume) {
  const int64_t n = volume.voxels_per_series();
  for (size_t j = 0; j < volume.series.size(); ++j) {
    if (!volume.presence[j]) continue;
    auto& s = volume.series[j];
    double mean = 0.0;
    for (float v : s) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (float v : s) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double sd = std::sqrt(var);
    if (sd < 1e-12) {
      for (auto& v : s) v = 0.0f;
    } else {
      const double inv = 1.0 / sd;
      for (auto& v : s) v = static_cast<float>((v - mean) * inv);
    }
  }
}

}  // namespace csm
