#include "csm/finetune.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "csm/metrics.hpp"

namespace csm {

using nlohmann::json;

MultiSeriesVolume pad_missing_series(const MultiSeriesVolume& volume) {
  if (volume.present_count() == 0)
    throw UsageError("pad_missing_series: subject has no present series");
  MultiSeriesVolume out = volume;
  for (size_t j = 0; j < out.series.size(); ++j)
    if (!out.presence[j]) std::fill(out.series[j].begin(), out.series[j].end(), 0.0f);
  return out;
}

std::string task_kind_name(TaskKind kind) {
  return kind == TaskKind::classification ? "classification" : "segmentation";
}

TaskKind task_kind_from_name(const std::string& name) {
  if (name == "classification") return TaskKind::classification;
  if (name == "segmentation") return TaskKind::segmentation;
  throw ConfigError("finetune.task: expected classification|segmentation, got '" + name + "'");
}

namespace {

// Simulated missing series (the padded-input scenario): per subject, a
// seeded draw removes drop_min..drop_max series, always leaving one present.
// Keyed by subject id so train and eval agree across runs and arms.
void apply_series_drop(MultiSeriesVolume& vol, const FinetuneSection& fc) {
  if (fc.drop_series_max <= 0) return;
  const int s = vol.series_count();
  Rng rng(mix_seed(fc.drop_seed, "drop-" + vol.subject_id));
  const int span = fc.drop_series_max - fc.drop_series_min + 1;
  int count = fc.drop_series_min + static_cast<int>(rng.uniform_below(static_cast<uint64_t>(span)));
  count = std::min(count, s - 1);
  if (count <= 0) return;
  std::vector<int> victims = rng.sample_subset(s, count);
  for (int j : victims) vol.presence[static_cast<size_t>(j)] = 0;
  vol = pad_missing_series(vol);
}

struct TaskForward {
  Tape<float>::Id loss = -1;
  Tape<float>::Id logits = -1;  // classification only
  Tape<float>::Id probs = -1;   // segmentation only (token layout)
};

TaskForward task_forward(Tape<float>& tape, CsmModel<float>& model,
                         const CsmModel<float>::Binding& binding, TaskHead<float>& head,
                         Tape<float>::Id head_w, Tape<float>::Id head_b,
                         const SubjectData& subject, const MultiSeriesVolume& vol,
                         bool with_loss) {
  const int patch = model.config().patch_edge;
  TokenGrid grid = patchify(vol, patch);
  const int s = grid.series_count();
  const int n = static_cast<int>(grid.tokens_per_series());
  MaskPlan plan = all_visible_plan(s, n);
  auto embedded = embed_visible(tape, model, binding, grid, plan);
  auto latent = encode(tape, model, binding, embedded.id);

  TaskForward out;
  if (head.kind == TaskKind::classification) {
    auto pooled = tape.mean_rows(latent, "cls_pool");
    out.logits = tape.add_row(tape.matmul(pooled, head_w, "cls_head"), head_b, "cls_head_bias");
    if (with_loss) {
      if (subject.class_label != 0 && subject.class_label != 1)
        throw ConfigError("finetune: subject " + subject.id + " lacks a class label");
      out.loss = tape.cross_entropy_logits(out.logits, subject.class_label, "task_loss");
    }
  } else {
    auto scores_all = tape.add_row(tape.matmul(latent, head_w, "seg_head"), head_b,
                                   "seg_head_bias");
    auto scores = tape.mean_series_groups(scores_all, s, n, "seg_series_mean");
    out.probs = tape.sigmoid(scores, "seg_probs");
    if (with_loss) {
      if (subject.mask.empty())
        throw ConfigError("finetune: subject " + subject.id + " lacks a voxel mask");
      std::vector<float> mask_f(subject.mask.begin(), subject.mask.end());
      TensorF target = patchify_grid(mask_f, vol.extents, patch);
      out.loss = tape.dice_loss(out.probs, target.cast<float>(), 1e-6f, "task_loss");
    }
  }
  return out;
}

double subject_score(CsmModel<float>& model, TaskHead<float>& head, const SubjectData& subject,
                     const MultiSeriesVolume& vol) {
  Tape<float> tape;
  auto binding = model.bind(tape);
  auto hw = tape.leaf(head.w.value, true, head.w.name);
  auto hb = tape.leaf(head.b.value, true, head.b.name);
  auto fwd = task_forward(tape, model, binding, head, hw, hb, subject, vol, false);
  const auto& logits = tape.value(fwd.logits).values;
  const double mx = std::max(logits[0], logits[1]);
  const double e0 = std::exp(static_cast<double>(logits[0]) - mx);
  const double e1 = std::exp(static_cast<double>(logits[1]) - mx);
  return e1 / (e0 + e1);
}

double subject_dice(CsmModel<float>& model, TaskHead<float>& head, const SubjectData& subject,
                    const MultiSeriesVolume& vol) {
  Tape<float> tape;
  auto binding = model.bind(tape);
  auto hw = tape.leaf(head.w.value, true, head.w.name);
  auto hb = tape.leaf(head.b.value, true, head.b.name);
  auto fwd = task_forward(tape, model, binding, head, hw, hb, subject, vol, false);
  const TensorF& probs = tape.value(fwd.probs);
  const int patch = model.config().patch_edge;
  TokenGrid grid = patchify(vol, patch);
  std::vector<float> voxels = unpatchify_grid(probs, grid.grid_dims, patch);
  std::vector<uint8_t> pred(voxels.size());
  for (size_t i = 0; i < voxels.size(); ++i) pred[i] = voxels[i] >= 0.5f ? 1 : 0;
  return dice_score(pred, subject.mask);
}

SplitMetrics evaluate_split(CsmModel<float>& model, TaskHead<float>& head,
                            const std::vector<SubjectData>& subjects,
                            const FinetuneSection& fc) {
  SplitMetrics out;
  out.count = static_cast<int64_t>(subjects.size());
  if (subjects.empty()) return out;
  if (head.kind == TaskKind::classification) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& s : subjects) {
      MultiSeriesVolume vol = s.volume;
      apply_series_drop(vol, fc);
      scores.push_back(subject_score(model, head, s, vol));
      labels.push_back(s.class_label);
    }
    out.value = auc(scores, labels);
  } else {
    double total = 0.0;
    for (const auto& s : subjects) {
      MultiSeriesVolume vol = s.volume;
      apply_series_drop(vol, fc);
      total += subject_dice(model, head, s, vol);
    }
    out.value = total / static_cast<double>(subjects.size());
  }
  return out;
}

}  // namespace

FinetuneOutputs run_finetune(const ExperimentConfig& config,
                             const std::filesystem::path& run_dir,
                             const FinetuneRuntimeOptions& options) {
  const FinetuneSection& fc = config.finetune;
  if (fc.steps < 0) throw ConfigError("finetune.steps: must be >= 0");
  if (fc.batch_size < 1) throw ConfigError("finetune.batch_size: must be >= 1");
  if (fc.labeling_ratio <= 0.0 || fc.labeling_ratio > 1.0)
    throw ConfigError("finetune.labeling_ratio: must lie in (0, 1]");
  if (fc.drop_series_min < 0 || fc.drop_series_max < fc.drop_series_min)
    throw ConfigError("finetune.drop_series: invalid range");
  if (config.manifest.empty()) throw ConfigError("data.manifest: required for finetuning");
  config.model.validate();
  const TaskKind task = task_kind_from_name(fc.task);

  DatasetManifest manifest = load_manifest(config.manifest);
  const LabelKind want = task == TaskKind::classification ? LabelKind::classification
                                                          : LabelKind::segmentation;
  if (manifest.label_kind != want)
    throw ConfigError("finetune: head kind '" + fc.task + "' does not match dataset label kind '" +
                      label_kind_name(manifest.label_kind) + "'");

  std::vector<SubjectData> train_all = load_split(manifest, "train", config.normalize);
  std::vector<SubjectData> val = load_split(manifest, "val", config.normalize);
  std::vector<SubjectData> test = load_split(manifest, "test", config.normalize);

  // Patient-wise label budget: a seeded subset of whole subjects.
  std::vector<size_t> order(train_all.size());
  std::iota(order.begin(), order.end(), 0);
  Rng ratio_rng(mix_seed(config.seed, "label-ratio"));
  ratio_rng.shuffle(order);
  const size_t n_train = static_cast<size_t>(std::floor(fc.labeling_ratio *
                                                        static_cast<double>(train_all.size())));
  if (n_train == 0) throw ConfigError("finetune.labeling_ratio: empty training subsample");
  std::vector<SubjectData> train;
  for (size_t i = 0; i < n_train; ++i) train.push_back(std::move(train_all[order[i]]));

  CsmModel<float> model(config.model, config.seed);
  if (!fc.checkpoint.empty()) {
    LoadedCheckpoint ckpt = load_checkpoint(fc.checkpoint);
    if (ckpt.meta.task != "none")
      throw ConfigError("finetune.checkpoint: expected a pretraining checkpoint, found task '" +
                        ckpt.meta.task + "'");
    if (!(ckpt.meta.model == config.model))
      throw ConfigError("finetune.checkpoint: model config differs from checkpoint");
    apply_checkpoint_strict(ckpt, model.parameters(), nullptr);
  }
  TaskHead<float> head(task, config.model, config.seed);

  std::vector<Parameter<float>*> trainable;
  if (!fc.freeze_encoder)
    for (auto* p : model.parameters()) trainable.push_back(p);
  for (auto* p : head.parameters()) trainable.push_back(p);
  AdamState<float> adam = AdamState<float>::init(trainable);
  AdamConfig adam_cfg;
  adam_cfg.weight_decay = fc.weight_decay;
  adam_cfg.coupled_weight_decay = fc.coupled_weight_decay;

  std::filesystem::create_directories(run_dir);
  const std::string config_hash = config.hash();
  TrainLog log;
  log.run_id = run_dir.filename().string();
  log.config_hash = config_hash;

  for (int64_t step = 1; step <= fc.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    LrSchedule sched{fc.base_lr, fc.min_lr, fc.steps};
    const double lr = cosine_lr(step - 1, sched);

    std::vector<int> batch;
    for (int b = 0; b < fc.batch_size; ++b) {
      const int64_t pos = (step - 1) * fc.batch_size + b;
      const int64_t epoch = pos / static_cast<int64_t>(train.size());
      const int64_t offset = pos % static_cast<int64_t>(train.size());
      std::vector<int> ord(train.size());
      std::iota(ord.begin(), ord.end(), 0);
      Rng rng(mix_seed(config.seed, "ft-order", static_cast<uint64_t>(epoch)));
      rng.shuffle(ord);
      batch.push_back(ord[static_cast<size_t>(offset)]);
    }

    Tape<float> tape;
    auto binding = model.bind(tape);
    auto hw = tape.leaf(head.w.value, true, head.w.name);
    auto hb = tape.leaf(head.b.value, true, head.b.name);
    std::vector<Tape<float>::Id> losses;
    for (size_t slot = 0; slot < batch.size(); ++slot) {
      const SubjectData& subject = train[static_cast<size_t>(batch[slot])];
      try {
        MultiSeriesVolume vol = subject.volume;
        apply_series_drop(vol, fc);
        auto fwd = task_forward(tape, model, binding, head, hw, hb, subject, vol, true);
        if (!std::isfinite(tape.value(fwd.loss).values[0])) throw NumericError("non-finite loss");
        losses.push_back(fwd.loss);
      } catch (const NumericError& e) {
        throw NumericError("finetune aborted at step " + std::to_string(step) + ", subject " +
                           subject.id + ": " + e.what());
      }
    }
    auto batch_loss = tape.scale(tape.sum_scalars(losses, "batch_losses"),
                                 1.0f / static_cast<float>(losses.size()), "batch_mean");
    tape.backward(batch_loss);
    for (auto* p : trainable) p->zero_grad();
    if (!fc.freeze_encoder) model.accumulate_grads(tape, binding);
    {
      const auto& gw = tape.grad(hw).values;
      const auto& gb = tape.grad(hb).values;
      for (size_t i = 0; i < gw.size(); ++i) head.w.grad.values[i] += gw[i];
      for (size_t i = 0; i < gb.size(); ++i) head.b.grad.values[i] += gb[i];
    }
    adam_step(trainable, adam, lr, adam_cfg);

    TrainLogRecord rec;
    rec.step = step;
    rec.epoch = ((step - 1) * fc.batch_size) / static_cast<int64_t>(train.size());
    rec.lr = lr;
    rec.loss = static_cast<double>(tape.value(batch_loss).values[0]);
    rec.masked_voxel_fraction = 0.0;
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                      .count();
    log.records.push_back(rec);
  }

  FinetuneOutputs out;
  out.metric_name = task == TaskKind::classification ? "auc" : "dice";
  out.metrics["val"] = evaluate_split(model, head, val, fc);
  out.metrics["test"] = evaluate_split(model, head, test, fc);
  out.train_subjects = static_cast<int64_t>(train.size());
  out.log = std::move(log);
  write_trainlog_ndjson(out.log, run_dir / "trainlog.ndjson");

  if (!options.skip_checkpoint) {
    CheckpointMeta meta;
    meta.task = fc.task;
    meta.model = config.model;
    meta.seed = config.seed;
    meta.step = fc.steps;
    meta.config_hash = config_hash;
    std::vector<Parameter<float>*> all = model.parameters();
    for (auto* p : head.parameters()) all.push_back(p);
    out.checkpoint = run_dir / "checkpoints" / "final.ckpt";
    save_checkpoint(out.checkpoint, meta, all, nullptr);
  }
  return out;
}

EvalOutputs run_eval(const ExperimentConfig& config) {
  if (config.eval.checkpoint.empty()) throw ConfigError("eval.checkpoint: required");
  if (config.manifest.empty()) throw ConfigError("data.manifest: required for eval");
  LoadedCheckpoint ckpt = load_checkpoint(config.eval.checkpoint);
  if (ckpt.meta.task == "none")
    throw ConfigError("eval.checkpoint: has no task head (task 'none')");
  const TaskKind task = task_kind_from_name(ckpt.meta.task);

  DatasetManifest manifest = load_manifest(config.manifest);
  const LabelKind want = task == TaskKind::classification ? LabelKind::classification
                                                          : LabelKind::segmentation;
  if (manifest.label_kind != want)
    throw ConfigError("eval: checkpoint head kind '" + ckpt.meta.task +
                      "' does not match dataset label kind '" +
                      label_kind_name(manifest.label_kind) + "'");

  CsmModel<float> model(ckpt.meta.model, ckpt.meta.seed);
  TaskHead<float> head(task, ckpt.meta.model, ckpt.meta.seed);
  std::vector<Parameter<float>*> all = model.parameters();
  for (auto* p : head.parameters()) all.push_back(p);
  apply_checkpoint_strict(ckpt, all, nullptr);

  EvalOutputs out;
  out.task = ckpt.meta.task;
  out.metric_name = task == TaskKind::classification ? "auc" : "dice";
  out.config_hash = ckpt.meta.config_hash;
  out.seed = ckpt.meta.seed;
  for (const auto& split : config.eval.splits) {
    std::vector<SubjectData> subjects = load_split(manifest, split, config.normalize);
    out.metrics[split] = evaluate_split(model, head, subjects, config.finetune);
  }
  return out;
}

void write_metrics_json(const FinetuneOutputs& out, const std::string& config_hash,
                        uint64_t seed, const std::filesystem::path& path) {
  json j;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["metric"] = out.metric_name;
  j["train_subjects"] = out.train_subjects;
  json splits;
  for (const auto& [name, m] : out.metrics)
    splits[name] = {{out.metric_name, m.value}, {"subjects", m.count}};
  j["splits"] = std::move(splits);
  std::ofstream f(path);
  if (!f) throw IoError("metrics: cannot open " + path.string());
  f << j.dump(2) << "\n";
}

void write_metrics_json(const EvalOutputs& out, const std::filesystem::path& path) {
  json j;
  j["config_hash"] = out.config_hash;
  j["seed"] = out.seed;
  j["metric"] = out.metric_name;
  json splits;
  for (const auto& [name, m] : out.metrics)
    splits[name] = {{out.metric_name, m.value}, {"subjects", m.count}};
  j["splits"] = std::move(splits);
  std::ofstream f(path);
  if (!f) throw IoError("metrics: cannot open " + path.string());
  f << j.dump(2) << "\n";
}

}  // namespace csm
