#include "csm/cli.hpp"

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "csm/ablate.hpp"
#include "csm/finetune.hpp"
#include "csm/gradsuite.hpp"
#include "csm/phantom.hpp"
#include "csm/pretrain.hpp"

namespace csm {

namespace {

using nlohmann::json;

std::filesystem::path resolve_run_dir(const ExperimentConfig& cfg, const std::string& out_flag) {
  const std::string dir = out_flag.empty() ? cfg.run_dir : out_flag;
  if (dir.empty())
    throw ConfigError("run_dir: required (set run_dir in the config or pass --out)");
  std::filesystem::create_directories(dir);
  return dir;
}

void write_resolved_config(const ExperimentConfig& cfg, const std::filesystem::path& run_dir) {
  std::ofstream out(run_dir / "config.resolved.json");
  if (!out) throw IoError("cannot write resolved config in " + run_dir.string());
  out << cfg.to_json_string() << "\n";
}

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  int64_t seed_override = -1;
  bool dump_plans = false;
};

ExperimentConfig load_with_overrides(const CommonFlags& flags) {
  if (flags.config_path.empty()) throw ConfigError("--config: required");
  ExperimentConfig cfg = load_config(flags.config_path);
  if (flags.seed_override >= 0) cfg.seed = static_cast<uint64_t>(flags.seed_override);
  if (!flags.out_dir.empty()) cfg.run_dir = flags.out_dir;
  return cfg;
}

int cmd_gen_data(const CommonFlags& flags) {
  ExperimentConfig cfg = load_with_overrides(flags);
  const auto run_dir = resolve_run_dir(cfg, flags.out_dir);
  write_resolved_config(cfg, run_dir);
  DatasetGenConfig gen;
  gen.phantom = cfg.gen.phantom;
  gen.subjects = cfg.gen.subjects;
  gen.label_kind = label_kind_from_name(cfg.gen.label_kind);
  gen.split_fractions = cfg.gen.split_fractions;
  gen.seed = cfg.seed;
  DatasetManifest manifest = generate_dataset(gen, run_dir);
  std::cout << "generated " << manifest.subjects.size() << " subjects in " << run_dir.string()
            << "\n";
  return 0;
}

int cmd_pretrain(const CommonFlags& flags) {
  ExperimentConfig cfg = load_with_overrides(flags);
  const auto run_dir = resolve_run_dir(cfg, flags.out_dir);
  write_resolved_config(cfg, run_dir);
  PretrainRuntimeOptions opts;
  opts.dump_plans = flags.dump_plans;
  PretrainOutputs out = run_pretrain(cfg, run_dir, opts);
  json metrics;
  metrics["config_hash"] = cfg.hash();
  metrics["seed"] = cfg.seed;
  metrics["final_loss"] = out.log.records.empty() ? 0.0 : out.log.records.back().loss;
  metrics["heldout_masked_mse"] = out.heldout_mse;
  metrics["heldout_baseline_mse"] = out.heldout_baseline_mse;
  metrics["heldout_subjects"] = out.heldout_subjects;
  metrics["final_checkpoint"] = out.final_checkpoint.string();
  std::ofstream mf(run_dir / "metrics.json");
  mf << metrics.dump(2) << "\n";
  std::cout << "pretrain done: " << out.log.records.size() << " steps, final loss "
            << metrics["final_loss"] << ", heldout mse " << out.heldout_mse << " (baseline "
            << out.heldout_baseline_mse << ")\n";
  return 0;
}

int cmd_finetune(const CommonFlags& flags) {
  ExperimentConfig cfg = load_with_overrides(flags);
  const auto run_dir = resolve_run_dir(cfg, flags.out_dir);
  // The resolved config doubles as an eval config for this run.
  ExperimentConfig echo = cfg;
  echo.eval.checkpoint = (run_dir / "checkpoints" / "final.ckpt").string();
  write_resolved_config(echo, run_dir);
  FinetuneOutputs out = run_finetune(cfg, run_dir);
  write_metrics_json(out, cfg.hash(), cfg.seed, run_dir / "metrics.json");
  std::cout << "finetune done: " << out.metric_name;
  for (const auto& [split, m] : out.metrics)
    std::cout << " " << split << "=" << m.value << " (n=" << m.count << ")";
  std::cout << "\n";
  return 0;
}

int cmd_eval(const CommonFlags& flags) {
  ExperimentConfig cfg = load_with_overrides(flags);
  const auto run_dir = resolve_run_dir(cfg, flags.out_dir);
  write_resolved_config(cfg, run_dir);
  EvalOutputs out = run_eval(cfg);
  write_metrics_json(out, run_dir / "metrics.json");
  std::cout << "eval done: " << out.metric_name;
  for (const auto& [split, m] : out.metrics)
    std::cout << " " << split << "=" << m.value << " (n=" << m.count << ")";
  std::cout << "\n";
  return 0;
}

int cmd_gradcheck(const CommonFlags& flags) {
  ExperimentConfig cfg = load_with_overrides(flags);
  auto results = run_gradcheck_suite(cfg.gradcheck.eps);
  bool all_ok = true;
  double worst = 0.0;
  for (const auto& r : results) {
    std::cout << (r.passed ? "ok   " : "FAIL ") << r.name << ": max_rel_err=" << r.max_rel_err
              << " (tolerance " << r.tolerance << ")\n";
    all_ok = all_ok && r.passed;
    worst = std::max(worst, r.max_rel_err);
  }
  std::cout << "gradcheck " << (all_ok ? "passed" : "FAILED") << ", worst max_rel_err=" << worst
            << "\n";
  return all_ok ? 0 : 1;
}

int cmd_ablate(const CommonFlags& flags) {
  ExperimentConfig cfg = load_with_overrides(flags);
  const auto run_dir = resolve_run_dir(cfg, flags.out_dir);
  write_resolved_config(cfg, run_dir);
  AblationReport report = run_ablation(cfg, run_dir);
  std::cout << report.table_text;
  return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args) {
  CLI::App app{"cross-series masking lab"};
  app.require_subcommand(1);

  CommonFlags flags;
  auto add_common = [&flags](CLI::App* sub, bool with_dump) {
    sub->add_option("--config", flags.config_path, "experiment config (JSON)")->required();
    sub->add_option("--seed", flags.seed_override, "override the config seed");
    sub->add_option("--out", flags.out_dir, "override the run directory");
    if (with_dump)
      sub->add_flag("--dump-plans", flags.dump_plans, "dump sampled mask plans per step");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate a phantom dataset");
  add_common(gen, false);
  CLI::App* pre = app.add_subcommand("pretrain", "self-supervised pretraining");
  add_common(pre, true);
  CLI::App* fin = app.add_subcommand("finetune", "task fine-tuning from a checkpoint");
  add_common(fin, false);
  CLI::App* ev = app.add_subcommand("eval", "evaluate a finetuned checkpoint");
  add_common(ev, false);
  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  add_common(gc, false);
  CLI::App* ab = app.add_subcommand("ablate", "run the six-arm masking-variant grid");
  add_common(ab, false);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(flags);
    if (pre->parsed()) return cmd_pretrain(flags);
    if (fin->parsed()) return cmd_finetune(flags);
    if (ev->parsed()) return cmd_eval(flags);
    if (gc->parsed()) return cmd_gradcheck(flags);
    if (ab->parsed()) return cmd_ablate(flags);
    std::cerr << "error: no subcommand\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace csm
