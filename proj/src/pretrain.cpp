#include "csm/pretrain.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

#include "csm/metrics.hpp"

namespace csm {

using nlohmann::json;

void write_trainlog_ndjson(const TrainLog& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("trainlog: cannot open " + path.string());
  for (const auto& r : log.records) {
    json j;
    j["step"] = r.step;
    j["epoch"] = r.epoch;
    j["lr"] = r.lr;
    j["loss"] = r.loss;
    j["masked_voxel_fraction"] = r.masked_voxel_fraction;
    j["wall_ms"] = r.wall_ms;
    j["run_id"] = log.run_id;
    j["config_hash"] = log.config_hash;
    out << j.dump() << "\n";
  }
}

TrainLog read_trainlog_ndjson(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("trainlog: cannot open " + path.string());
  TrainLog log;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw IoError("trainlog: invalid line in " + path.string());
    TrainLogRecord r;
    r.step = j.at("step").get<int64_t>();
    r.epoch = j.at("epoch").get<int64_t>();
    r.lr = j.at("lr").get<double>();
    r.loss = j.at("loss").get<double>();
    r.masked_voxel_fraction = j.at("masked_voxel_fraction").get<double>();
    r.wall_ms = j.at("wall_ms").get<double>();
    log.run_id = j.at("run_id").get<std::string>();
    log.config_hash = j.at("config_hash").get<std::string>();
    log.records.push_back(r);
  }
  return log;
}

std::vector<SubjectData> load_split(const DatasetManifest& manifest, const std::string& split,
                                    bool normalize) {
  std::vector<SubjectData> out;
  for (const SubjectRecord* rec : manifest.split(split)) {
    LabeledExample ex = load_example(manifest, *rec, normalize);
    SubjectData s;
    s.id = rec->id;
    s.volume = std::move(ex.volume);
    s.class_label = ex.class_label;
    s.mask = std::move(ex.mask);
    out.push_back(std::move(s));
  }
  return out;
}

MultiSeriesVolume crop_volume(const MultiSeriesVolume& v, const std::array<int, 3>& corner,
                              const std::array<int, 3>& extents) {
  for (int a = 0; a < 3; ++a)
    if (corner[a] < 0 || extents[a] < 1 || corner[a] + extents[a] > v.extents[a])
      throw UsageError("crop_volume: window outside the volume");
  MultiSeriesVolume out = v;
  out.extents = extents;
  const int H = v.extents[1], W = v.extents[2];
  const int h = extents[1], w = extents[2];
  for (size_t j = 0; j < v.series.size(); ++j) {
    std::vector<float> dst(static_cast<size_t>(extents[0]) * h * w);
    for (int z = 0; z < extents[0]; ++z)
      for (int y = 0; y < h; ++y) {
        const int64_t src = (static_cast<int64_t>(z + corner[0]) * H + (y + corner[1])) * W +
                            corner[2];
        std::memcpy(dst.data() + (static_cast<int64_t>(z) * h + y) * w,
                    v.series[j].data() + src, sizeof(float) * static_cast<size_t>(w));
      }
    out.series[j] = std::move(dst);
  }
  return out;
}

MultiSeriesVolume flip_volume(const MultiSeriesVolume& v, bool flip_z, bool flip_y, bool flip_x) {
  if (!flip_z && !flip_y && !flip_x) return v;
  MultiSeriesVolume out = v;
  const int D = v.extents[0], H = v.extents[1], W = v.extents[2];
  for (size_t j = 0; j < v.series.size(); ++j) {
    const auto& src = v.series[j];
    auto& dst = out.series[j];
    for (int z = 0; z < D; ++z)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const int sz = flip_z ? D - 1 - z : z;
          const int sy = flip_y ? H - 1 - y : y;
          const int sx = flip_x ? W - 1 - x : x;
          dst[(static_cast<size_t>(z) * H + y) * W + x] =
              src[(static_cast<size_t>(sz) * H + sy) * W + sx];
        }
  }
  return out;
}

namespace {

// Deterministic batch assembly: subject order is reshuffled per epoch from a
// counter-derived stream, and a step's slots are a pure function of the step
// index, so resumed runs see the same subjects.
struct BatchSchedule {
  int64_t dataset_size;
  int batch_size;
  uint64_t seed;

  std::vector<int> batch_for_step(int64_t step) const {
    std::vector<int> out;
    out.reserve(static_cast<size_t>(batch_size));
    const int64_t base = (step - 1) * batch_size;
    for (int b = 0; b < batch_size; ++b) {
      const int64_t pos = base + b;
      const int64_t epoch = pos / dataset_size;
      const int64_t offset = pos % dataset_size;
      std::vector<int> order(static_cast<size_t>(dataset_size));
      for (int64_t i = 0; i < dataset_size; ++i) order[static_cast<size_t>(i)] = static_cast<int>(i);
      Rng rng(mix_seed(seed, "batch-order", static_cast<uint64_t>(epoch)));
      rng.shuffle(order);
      out.push_back(order[static_cast<size_t>(offset)]);
    }
    return out;
  }

  int64_t epoch_of_step(int64_t step) const { return ((step - 1) * batch_size) / dataset_size; }
};

double lr_at(int64_t step, int64_t total_steps, const PretrainSection& p) {
  LrSchedule sched{p.base_lr, p.min_lr, total_steps};
  if (p.warmup_steps > 0 && step <= p.warmup_steps)
    return p.base_lr * static_cast<double>(step) / static_cast<double>(p.warmup_steps);
  return cosine_lr(step - 1, sched);
}

}  // namespace

HeldoutEval eval_masked_reconstruction(CsmModel<float>& model, const MaskConfig& mask,
                                       const std::vector<SubjectData>& subjects,
                                       uint64_t eval_seed) {
  if (subjects.empty()) throw UsageError("eval_masked_reconstruction: empty subject set");
  const int p = model.config().patch_edge;
  std::vector<TokenGrid> grids;
  std::vector<MaskPlan> plans;
  double sq_sum = 0.0;
  int64_t vox_count = 0;
  for (size_t si = 0; si < subjects.size(); ++si) {
    TokenGrid grid = patchify(subjects[si].volume, p);
    Rng rng(mix_seed(eval_seed, "eval-mask", si));
    MaskPlan plan = sample_mask_plan(grid.series_count(),
                                     static_cast<int>(grid.tokens_per_series()), mask, rng,
                                     &grid.presence);
    Tape<float> tape;
    auto binding = model.bind(tape);
    auto fwd = csm_objective(tape, model, binding, grid, plan, mask);
    const double mse = static_cast<double>(tape.value(fwd.loss).values[0]);
    const int64_t n_vox = static_cast<int64_t>(loss_rows(plan, mask).size()) *
                          grid.patch_volume();
    sq_sum += mse * static_cast<double>(n_vox);
    vox_count += n_vox;
    grids.push_back(std::move(grid));
    plans.push_back(std::move(plan));
  }
  HeldoutEval out;
  out.subjects = static_cast<int64_t>(subjects.size());
  out.model_mse = sq_sum / static_cast<double>(vox_count);
  out.baseline_mse = mean_baseline_mse(grids, plans, mask);
  return out;
}

PretrainOutputs run_pretrain(const ExperimentConfig& config,
                             const std::filesystem::path& run_dir,
                             const PretrainRuntimeOptions& options) {
  const PretrainSection& pc = config.pretrain;
  if (pc.steps < 1) throw ConfigError("pretrain.steps: must be >= 1");
  if (pc.batch_size < 1) throw ConfigError("pretrain.batch_size: must be >= 1");
  if (pc.checkpoint_every < 1) throw ConfigError("pretrain.checkpoint_every: must be >= 1");
  LrSchedule{pc.base_lr, pc.min_lr, pc.steps}.validate();
  if (config.manifest.empty()) throw ConfigError("data.manifest: required for pretraining");
  config.model.validate();

  DatasetManifest manifest = load_manifest(config.manifest);
  std::vector<SubjectData> train = load_split(manifest, "train", config.normalize);
  if (train.empty()) throw ConfigError("data.manifest: train split is empty");
  std::vector<SubjectData> heldout = load_split(manifest, "val", config.normalize);
  {
    std::vector<SubjectData> test = load_split(manifest, "test", config.normalize);
    for (auto& s : test) heldout.push_back(std::move(s));
  }
  {
    std::array<int, 3> in_ext = manifest.extents;
    if (!pc.crop_extents.empty()) in_ext = {pc.crop_extents[0], pc.crop_extents[1], pc.crop_extents[2]};
    const int p = config.model.patch_edge;
    if (in_ext[0] % p || in_ext[1] % p || in_ext[2] % p)
      throw ConfigError("pretrain: input extents not divisible by model.patch_edge");
    const int n_tokens = (in_ext[0] / p) * (in_ext[1] / p) * (in_ext[2] / p);
    config.mask.validate(manifest.series_count, n_tokens);
  }

  std::filesystem::create_directories(run_dir / "checkpoints");
  if (pc.resume_from.empty() && std::filesystem::exists(run_dir / "trainlog.ndjson"))
    std::filesystem::remove(run_dir / "trainlog.ndjson");
  if (options.dump_plans) {
    if (pc.resume_from.empty()) std::filesystem::remove_all(run_dir / "maskplans");
    std::filesystem::create_directories(run_dir / "maskplans");
  }

  CsmModel<float> model(config.model, config.seed);
  auto params = model.parameters();
  AdamState<float> adam = AdamState<float>::init(params);
  AdamConfig adam_cfg;
  adam_cfg.weight_decay = pc.weight_decay;
  adam_cfg.coupled_weight_decay = pc.coupled_weight_decay;

  int64_t start_step = 0;
  if (!pc.resume_from.empty()) {
    LoadedCheckpoint ckpt = load_checkpoint(pc.resume_from);
    if (ckpt.meta.task != "none")
      throw IoError("pretrain: checkpoint task '" + ckpt.meta.task +
                    "' cannot initialize pretraining (strict load)");
    if (!(ckpt.meta.model == config.model))
      throw ConfigError("pretrain.resume_from: model config differs from checkpoint");
    apply_checkpoint_strict(ckpt, params, &adam);
    start_step = ckpt.meta.step;
  }

  BatchSchedule schedule{static_cast<int64_t>(train.size()), pc.batch_size, config.seed};
  const std::string config_hash = config.hash();
  TrainLog log;
  log.run_id = run_dir.filename().string();
  log.config_hash = config_hash;

  std::ofstream log_stream(run_dir / "trainlog.ndjson",
                           start_step > 0 ? std::ios::app : std::ios::trunc);
  if (!log_stream) throw IoError("pretrain: cannot open trainlog in " + run_dir.string());

  const int patch = config.model.patch_edge;
  std::filesystem::path last_ckpt;
  for (int64_t step = start_step + 1; step <= pc.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at(step, pc.steps, pc);
    const std::vector<int> batch = schedule.batch_for_step(step);

    Tape<float> tape;
    auto binding = model.bind(tape);
    std::vector<Tape<float>::Id> losses;
    double fraction_sum = 0.0;
    for (size_t slot = 0; slot < batch.size(); ++slot) {
      const SubjectData& subject = train[static_cast<size_t>(batch[slot])];
      try {
        MultiSeriesVolume vol = subject.volume;
        Rng aug(mix_seed(config.seed, "augment", static_cast<uint64_t>(step), slot));
        if (!pc.crop_extents.empty()) {
          const std::array<int, 3> want{pc.crop_extents[0], pc.crop_extents[1],
                                        pc.crop_extents[2]};
          std::array<int, 3> corner{};
          for (int a = 0; a < 3; ++a) {
            if (want[a] > vol.extents[a])
              throw ConfigError("pretrain.crop_extents: larger than the volume");
            corner[a] = static_cast<int>(
                aug.uniform_below(static_cast<uint64_t>(vol.extents[a] - want[a] + 1)));
          }
          vol = crop_volume(vol, corner, want);
        }
        if (pc.augment_flips)
          vol = flip_volume(vol, aug.bernoulli(0.5), aug.bernoulli(0.5), aug.bernoulli(0.5));
        TokenGrid grid = patchify(vol, patch);
        Rng mask_rng(mix_seed(config.seed, "mask", static_cast<uint64_t>(step), slot));
        MaskPlan plan = sample_mask_plan(grid.series_count(),
                                         static_cast<int>(grid.tokens_per_series()), config.mask,
                                         mask_rng, &grid.presence);
        fraction_sum += masked_voxel_fraction(plan);
        if (options.dump_plans && step <= options.dump_plans_max_step) {
          std::ofstream plan_out(run_dir / "maskplans" /
                                 ("step" + std::to_string(step) + "_slot" + std::to_string(slot) +
                                  "_" + subject.id + ".json"));
          plan_out << plan.to_json_string() << "\n";
        }
        auto fwd = csm_objective(tape, model, binding, grid, plan, config.mask);
        const float loss_val = tape.value(fwd.loss).values[0];
        if (!std::isfinite(loss_val))
          throw NumericError("non-finite loss");
        losses.push_back(fwd.loss);
      } catch (const NumericError& e) {
        throw NumericError("pretrain aborted at step " + std::to_string(step) + ", subject " +
                           subject.id + ": " + e.what());
      }
    }
    auto batch_loss = tape.scale(tape.sum_scalars(losses, "batch_losses"),
                                 1.0f / static_cast<float>(losses.size()), "batch_mean");
    tape.backward(batch_loss);
    model.zero_grads();
    model.accumulate_grads(tape, binding);
    adam_step(params, adam, lr, adam_cfg);

    TrainLogRecord rec;
    rec.step = step;
    rec.epoch = schedule.epoch_of_step(step);
    rec.lr = lr;
    rec.loss = static_cast<double>(tape.value(batch_loss).values[0]);
    rec.masked_voxel_fraction = fraction_sum / static_cast<double>(batch.size());
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                      .count();
    log.records.push_back(rec);
    {
      json j;
      j["step"] = rec.step;
      j["epoch"] = rec.epoch;
      j["lr"] = rec.lr;
      j["loss"] = rec.loss;
      j["masked_voxel_fraction"] = rec.masked_voxel_fraction;
      j["wall_ms"] = rec.wall_ms;
      j["run_id"] = log.run_id;
      j["config_hash"] = log.config_hash;
      log_stream << j.dump() << "\n";
      log_stream.flush();
    }

    if (step % pc.checkpoint_every == 0 || step == pc.steps) {
      CheckpointMeta meta;
      meta.task = "none";
      meta.model = config.model;
      meta.seed = config.seed;
      meta.step = step;
      meta.config_hash = config_hash;
      last_ckpt = run_dir / "checkpoints" / ("step" + std::to_string(step) + ".ckpt");
      save_checkpoint(last_ckpt, meta, params, &adam);
    }
  }

  PretrainOutputs out;
  out.log = std::move(log);
  out.final_checkpoint = last_ckpt;
  if (!pc.crop_extents.empty()) {
    // Deterministic center crop for held-out evaluation.
    const std::array<int, 3> want{pc.crop_extents[0], pc.crop_extents[1], pc.crop_extents[2]};
    for (auto& s : heldout) {
      const std::array<int, 3> corner{(s.volume.extents[0] - want[0]) / 2,
                                      (s.volume.extents[1] - want[1]) / 2,
                                      (s.volume.extents[2] - want[2]) / 2};
      s.volume = crop_volume(s.volume, corner, want);
    }
  }
  if (!heldout.empty()) {
    HeldoutEval ev = eval_masked_reconstruction(model, config.mask, heldout,
                                                mix_seed(config.seed, "heldout"));
    out.heldout_mse = ev.model_mse;
    out.heldout_baseline_mse = ev.baseline_mse;
    out.heldout_subjects = ev.subjects;
  }
  return out;
}

}  // namespace csm
