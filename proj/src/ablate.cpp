#include "csm/ablate.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"

#include "csm/finetune.hpp"
#include "csm/pretrain.hpp"

namespace csm {

using nlohmann::json;

namespace {

struct ArmSpec {
  std::string id;
  double mask_ratio;
  bool random_patch;       // false: same positions masked on every series
  char series_mask;        // 'y' reconstruct, 'o' mask without reconstruction, 'n' off
  bool complete_series;    // false: finetune/inference with 1-2 series removed
};

const std::vector<ArmSpec> kArms = {
    {"ratio875_randpatch_seriesmask_complete", 0.875, true, 'y', true},
    {"ratio875_randpatch_masknorecon_complete", 0.875, true, 'o', true},
    {"ratio875_randpatch_noseriesmask_complete", 0.875, true, 'n', true},
    {"ratio875_samepatch_seriesmask_complete", 0.875, false, 'y', true},
    {"ratio875_randpatch_seriesmask_missing", 0.875, true, 'y', false},
    {"ratio500_randpatch_seriesmask_complete", 0.500, true, 'y', true},
};

std::string series_mask_name(char c) {
  switch (c) {
    case 'y': return "reconstruct";
    case 'o': return "mask-only";
    default: return "off";
  }
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

AblationReport run_ablation(const ExperimentConfig& base,
                            const std::filesystem::path& run_dir) {
  if (base.ablation.seeds < 1) throw ConfigError("ablation.seeds: must be >= 1");
  if (base.manifest.empty()) throw ConfigError("data.manifest: required for ablation");

  AblationReport report;
  report.metric_name = base.finetune.task == "classification" ? "auc" : "dice";

  for (const ArmSpec& arm : kArms) {
    try {
      ExperimentConfig cfg = base;
      cfg.mask.intra_ratio = arm.mask_ratio;
      cfg.mask.same_position = !arm.random_patch;
      cfg.mask.series_mask_enabled = arm.series_mask != 'n';
      cfg.mask.reconstruct_masked_series = arm.series_mask == 'y';
      if (!arm.complete_series) {
        cfg.finetune.drop_series_min = 1;
        cfg.finetune.drop_series_max = 2;
      } else {
        cfg.finetune.drop_series_min = 0;
        cfg.finetune.drop_series_max = 0;
      }
      if (base.ablation.pretrain_steps > 0) cfg.pretrain.steps = base.ablation.pretrain_steps;
      if (base.ablation.finetune_steps > 0) cfg.finetune.steps = base.ablation.finetune_steps;

      const std::filesystem::path arm_dir = run_dir / "arms" / arm.id;
      std::filesystem::create_directories(arm_dir);

      PretrainRuntimeOptions popts;
      popts.dump_plans = true;
      popts.dump_plans_max_step = 1;  // step-1 plans document each arm's masking
      PretrainOutputs pre = run_pretrain(cfg, arm_dir / "pretrain", popts);

      AblationArmResult result;
      result.id = arm.id;
      result.mask_ratio = arm.mask_ratio;
      result.random_patch = arm.random_patch;
      result.series_mask = series_mask_name(arm.series_mask);
      result.complete_series = arm.complete_series;

      for (int s = 0; s < base.ablation.seeds; ++s) {
        ExperimentConfig ft = cfg;
        ft.seed = base.seed + static_cast<uint64_t>(s);
        ft.finetune.checkpoint = pre.final_checkpoint.string();
        FinetuneOutputs fo =
            run_finetune(ft, arm_dir / ("finetune-seed" + std::to_string(ft.seed)));
        result.seed_metrics.push_back(fo.metrics.at("test").value);
      }
      result.median = median_of(result.seed_metrics);
      const auto [mn, mx] =
          std::minmax_element(result.seed_metrics.begin(), result.seed_metrics.end());
      result.spread = 0.5 * (*mx - *mn);
      report.arms.push_back(std::move(result));
    } catch (const std::exception& e) {
      throw std::runtime_error("ablation arm '" + arm.id + "' failed: " + e.what());
    }
  }

  // Aligned text table, one row per arm.
  char line[160];
  std::string text;
  std::snprintf(line, sizeof(line), "%-10s %-17s %-12s %-15s %18s\n", "Mask-ratio",
                "Random patch-mask", "Series-mask", "Complete-series",
                (report.metric_name + " (median+-spread)").c_str());
  text += line;
  for (const auto& a : report.arms) {
    std::snprintf(line, sizeof(line), "%-10.1f%% %-16s %-12s %-15s %10.4f +- %.4f\n",
                  a.mask_ratio * 100.0, a.random_patch ? "yes" : "same-position",
                  a.series_mask.c_str(), a.complete_series ? "yes" : "zero-padded", a.median,
                  a.spread);
    text += line;
  }
  report.table_text = text;

  json j;
  j["metric"] = report.metric_name;
  json arms = json::array();
  for (const auto& a : report.arms) {
    json e;
    e["id"] = a.id;
    e["mask_ratio"] = a.mask_ratio;
    e["random_patch"] = a.random_patch;
    e["series_mask"] = a.series_mask;
    e["complete_series"] = a.complete_series;
    e["seed_metrics"] = a.seed_metrics;
    e["median"] = a.median;
    e["spread"] = a.spread;
    arms.push_back(std::move(e));
  }
  j["arms"] = std::move(arms);
  std::ofstream jf(run_dir / "report.json");
  jf << j.dump(2) << "\n";
  std::ofstream tf(run_dir / "report.txt");
  tf << text;
  return report;
}

}  // namespace csm
