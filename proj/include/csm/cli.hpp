#pragma once

#include <string>
#include <vector>

namespace csm {

// Entry point behind the csm-lab binary; also callable in-process by tests.
// Exit codes: 0 success, 2 usage/configuration error, 1 runtime failure.
int run_command(const std::vector<std::string>& args);

struct AblationArmResult {
  std::string id;
  double mask_ratio = 0.0;
  bool random_patch = true;
  std::string series_mask;  // "reconstruct" | "mask-only" | "off"
  bool complete_series = true;
  std::vector<double> seed_metrics;
  double median = 0.0;
  double spread = 0.0;  // half of (max - min)
};

struct AblationReport {
  std::string metric_name;
  std::vector<AblationArmResult> arms;
  std::string table_text;
};

}  // namespace csm
