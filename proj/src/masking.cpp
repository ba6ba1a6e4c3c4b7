#include "csm/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

namespace csm {

using nlohmann::json;

void MaskConfig::validate(int series_count, int tokens_per_series) const {
  if (intra_ratio < 0.0 || intra_ratio >= 1.0)
    throw ConfigError("mask.intra_ratio: must lie in [0, 1)");
  if (inter_prob < 0.0 || inter_prob > 1.0)
    throw ConfigError("mask.inter_prob: must lie in [0, 1]");
  if (tokens_per_series < 1) throw ConfigError("mask: tokens_per_series must be positive");
  if (series_count < 1) throw ConfigError("mask: series_count must be positive");
  const int m = static_cast<int>(std::floor(intra_ratio * tokens_per_series));
  if (m > tokens_per_series - 1)
    throw ConfigError("mask.intra_ratio: leaves zero unmasked tokens");
}

bool MaskPlan::is_fully_masked(int series) const {
  return std::binary_search(fully_masked.begin(), fully_masked.end(), series);
}

bool MaskPlan::is_absent(int series) const {
  return std::binary_search(absent.begin(), absent.end(), series);
}

std::vector<int> MaskPlan::unmasked(int series) const {
  const auto& m = masked[static_cast<size_t>(series)];
  std::vector<int> out;
  out.reserve(static_cast<size_t>(tokens_per_series) - m.size());
  size_t mi = 0;
  for (int i = 0; i < tokens_per_series; ++i) {
    if (mi < m.size() && m[mi] == i) {
      ++mi;
    } else {
      out.push_back(i);
    }
  }
  return out;
}

bool MaskPlan::loss_eligible(int series, const MaskConfig& config) const {
  if (is_absent(series)) return false;
  if (is_fully_masked(series)) return config.reconstruct_masked_series;
  return true;
}

void MaskPlan::validate() const {
  if (series_count < 1 || tokens_per_series < 1)
    throw UsageError("mask plan: empty dimensions");
  if (static_cast<int>(masked.size()) != series_count)
    throw UsageError("mask plan: per-series list count mismatch");
  int visible_series = 0;
  for (int j = 0; j < series_count; ++j) {
    const auto& m = masked[static_cast<size_t>(j)];
    if (!std::is_sorted(m.begin(), m.end()) ||
        std::adjacent_find(m.begin(), m.end()) != m.end())
      throw UsageError("mask plan: masked indices must be sorted and unique");
    if (!m.empty() && (m.front() < 0 || m.back() >= tokens_per_series))
      throw UsageError("mask plan: masked index out of range");
    const bool full = static_cast<int>(m.size()) == tokens_per_series;
    if (is_fully_masked(j) && !full)
      throw UsageError("mask plan: S_m member is not fully masked");
    if (is_absent(j) && !full)
      throw UsageError("mask plan: absent series must be fully masked");
    if (!full) ++visible_series;
  }
  if (visible_series == 0) throw UsageError("mask plan: no visible series");
}

std::string MaskPlan::to_json_string() const {
  json j;
  j["version"] = 1;
  j["series_count"] = series_count;
  j["tokens_per_series"] = tokens_per_series;
  j["masked"] = masked;
  j["fully_masked"] = fully_masked;
  j["absent"] = absent;
  return j.dump();
}

MaskPlan MaskPlan::from_json_string(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw UsageError("mask plan: invalid JSON");
  MaskPlan plan;
  try {
    if (j.at("version").get<int>() != 1) throw UsageError("mask plan: unsupported version");
    plan.series_count = j.at("series_count").get<int>();
    plan.tokens_per_series = j.at("tokens_per_series").get<int>();
    plan.masked = j.at("masked").get<std::vector<std::vector<int>>>();
    plan.fully_masked = j.at("fully_masked").get<std::vector<int>>();
    plan.absent = j.at("absent").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("mask plan: bad field: ") + e.what());
  }
  plan.validate();
  return plan;
}

std::vector<int> sample_intra_mask(int tokens_per_series, double rho, Rng& rng) {
  if (rho < 0.0 || rho >= 1.0) throw ConfigError("intra mask: rho must lie in [0, 1)");
  if (tokens_per_series < 1) throw ConfigError("intra mask: no tokens");
  const int m = static_cast<int>(std::floor(rho * tokens_per_series));
  if (m > tokens_per_series - 1) throw ConfigError("intra mask: rho leaves zero unmasked tokens");
  if (m == 0) return {};
  return rng.sample_subset(tokens_per_series, m);
}

std::vector<int> sample_inter_mask(int series_count, Rng& rng) {
  if (series_count < 2)
    throw ConfigError("inter mask: undefined for fewer than two series");
  const int k = 1 + static_cast<int>(rng.uniform_below(static_cast<uint64_t>(series_count - 1)));
  return rng.sample_subset(series_count, k);
}

MaskPlan sample_mask_plan(int series_count, int tokens_per_series, const MaskConfig& config,
                          Rng& rng, const std::vector<uint8_t>* presence) {
  config.validate(series_count, tokens_per_series);
  if (presence && static_cast<int>(presence->size()) != series_count)
    throw UsageError("mask plan: presence flag count mismatch");

  MaskPlan plan;
  plan.series_count = series_count;
  plan.tokens_per_series = tokens_per_series;
  plan.masked.resize(static_cast<size_t>(series_count));

  std::vector<int> present;
  for (int j = 0; j < series_count; ++j) {
    if (presence && !(*presence)[static_cast<size_t>(j)]) {
      plan.absent.push_back(j);
    } else {
      present.push_back(j);
    }
  }
  if (present.empty()) throw UsageError("mask plan: subject has no present series");

  std::vector<int> all(static_cast<size_t>(tokens_per_series));
  std::iota(all.begin(), all.end(), 0);
  for (int j : plan.absent) plan.masked[static_cast<size_t>(j)] = all;

  if (config.series_mask_enabled && present.size() >= 2 && rng.bernoulli(config.inter_prob)) {
    const int k =
        1 + static_cast<int>(rng.uniform_below(static_cast<uint64_t>(present.size() - 1)));
    std::vector<int> subset = rng.sample_subset(static_cast<int>(present.size()), k);
    for (int idx : subset) plan.fully_masked.push_back(present[static_cast<size_t>(idx)]);
    for (int j : plan.fully_masked) plan.masked[static_cast<size_t>(j)] = all;
  }

  std::vector<int> shared;
  bool shared_drawn = false;
  for (int j : present) {
    if (plan.is_fully_masked(j)) continue;
    if (config.same_position) {
      if (!shared_drawn) {
        shared = sample_intra_mask(tokens_per_series, config.intra_ratio, rng);
        shared_drawn = true;
      }
      plan.masked[static_cast<size_t>(j)] = shared;
    } else {
      plan.masked[static_cast<size_t>(j)] =
          sample_intra_mask(tokens_per_series, config.intra_ratio, rng);
    }
  }

  plan.validate();
  return plan;
}

double masked_voxel_fraction(const MaskPlan& plan) {
  plan.validate();
  int64_t total = 0;
  for (const auto& m : plan.masked) total += static_cast<int64_t>(m.size());
  return static_cast<double>(total) /
         (static_cast<double>(plan.series_count) * static_cast<double>(plan.tokens_per_series));
}

}  // namespace csm
