#include "csm/config.hpp"

#include <fstream>
#include <set>

#include "json.hpp"

#include "csm/errors.hpp"

namespace csm {

using nlohmann::json;

namespace {

// Strict object reader: every key must be consumed, misses fall back to the
// caller's default, and all errors carry the full field path.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  ~Section() = default;

  template <typename T>
  T get(const std::string& key, const T& fallback) {
    seen_.insert(key);
    if (!j_.contains(key)) return fallback;
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path_ + "." + key + ": wrong type");
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json* subobject(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) return nullptr;
    if (!j_.at(key).is_object()) throw ConfigError(path_ + "." + key + ": expected an object");
    return &j_.at(key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        throw ConfigError(path_ + "." + it.key() + ": unknown field");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

ModelConfig parse_model(const json& j) {
  Section s(j, "model");
  ModelConfig m;
  m.d_enc = s.get("d_enc", m.d_enc);
  m.d_dec = s.get("d_dec", m.d_dec);
  m.enc_depth = s.get("enc_depth", m.enc_depth);
  m.dec_depth = s.get("dec_depth", m.dec_depth);
  m.enc_heads = s.get("enc_heads", m.enc_heads);
  m.dec_heads = s.get("dec_heads", m.dec_heads);
  m.patch_edge = s.get("patch_edge", m.patch_edge);
  m.s_max = s.get("s_max", m.s_max);
  m.n_max = s.get("n_max", m.n_max);
  m.dropout = s.get("dropout", m.dropout);
  m.ln_eps = s.get("ln_eps", m.ln_eps);
  s.finish();
  m.validate();
  return m;
}

json model_to_json(const ModelConfig& m) {
  json j;
  j["d_enc"] = m.d_enc;
  j["d_dec"] = m.d_dec;
  j["enc_depth"] = m.enc_depth;
  j["dec_depth"] = m.dec_depth;
  j["enc_heads"] = m.enc_heads;
  j["dec_heads"] = m.dec_heads;
  j["patch_edge"] = m.patch_edge;
  j["s_max"] = m.s_max;
  j["n_max"] = m.n_max;
  j["dropout"] = m.dropout;
  j["ln_eps"] = m.ln_eps;
  return j;
}

MaskConfig parse_mask(const json& j) {
  Section s(j, "mask");
  MaskConfig m;
  m.intra_ratio = s.get("intra_ratio", m.intra_ratio);
  m.inter_prob = s.get("inter_prob", m.inter_prob);
  m.same_position = s.get("same_position", m.same_position);
  m.series_mask_enabled = s.get("series_mask_enabled", m.series_mask_enabled);
  m.reconstruct_masked_series = s.get("reconstruct_masked_series", m.reconstruct_masked_series);
  s.finish();
  if (m.intra_ratio < 0.0 || m.intra_ratio >= 1.0)
    throw ConfigError("mask.intra_ratio: must lie in [0, 1)");
  if (m.inter_prob < 0.0 || m.inter_prob > 1.0)
    throw ConfigError("mask.inter_prob: must lie in [0, 1]");
  return m;
}

json mask_to_json(const MaskConfig& m) {
  json j;
  j["intra_ratio"] = m.intra_ratio;
  j["inter_prob"] = m.inter_prob;
  j["same_position"] = m.same_position;
  j["series_mask_enabled"] = m.series_mask_enabled;
  j["reconstruct_masked_series"] = m.reconstruct_masked_series;
  return j;
}

PhantomSpec parse_phantom(const json& j) {
  Section s(j, "gen.phantom");
  PhantomSpec p;
  auto ext = s.get<std::vector<int>>("extents", {p.extents[0], p.extents[1], p.extents[2]});
  if (ext.size() != 3) throw ConfigError("gen.phantom.extents: expected 3 entries");
  p.extents = {ext[0], ext[1], ext[2]};
  p.series_count = s.get("series_count", p.series_count);
  p.patch_edge = s.get("patch_edge", p.patch_edge);
  p.blob_count_min = s.get("blob_count_min", p.blob_count_min);
  p.blob_count_max = s.get("blob_count_max", p.blob_count_max);
  p.class_rule = s.get("class_rule", p.class_rule);
  p.lesion_radius_min = s.get("lesion_radius_min", p.lesion_radius_min);
  p.lesion_radius_max = s.get("lesion_radius_max", p.lesion_radius_max);
  p.lesion_radius_factor_malignant =
      s.get("lesion_radius_factor_malignant", p.lesion_radius_factor_malignant);
  p.lesion_amp_benign = s.get("lesion_amp_benign", p.lesion_amp_benign);
  p.lesion_amp_malignant = s.get("lesion_amp_malignant", p.lesion_amp_malignant);
  const json arr = s.get<json>("transforms", json::array());
  if (!arr.is_array()) throw ConfigError("gen.phantom.transforms: expected an array");
  for (size_t i = 0; i < arr.size(); ++i) {
    Section ts(arr[i], "gen.phantom.transforms[" + std::to_string(i) + "]");
    SeriesTransform t;
    t.gain = ts.get("gain", t.gain);
    t.bias = ts.get("bias", t.bias);
    t.nonlinearity = ts.get("nonlinearity", t.nonlinearity);
    t.noise_sigma = ts.get("noise_sigma", t.noise_sigma);
    ts.finish();
    p.transforms.push_back(t);
  }
  s.finish();
  p.validate();
  return p;
}

json phantom_to_json(const PhantomSpec& p) {
  json j;
  j["extents"] = p.extents;
  j["series_count"] = p.series_count;
  j["patch_edge"] = p.patch_edge;
  j["blob_count_min"] = p.blob_count_min;
  j["blob_count_max"] = p.blob_count_max;
  j["class_rule"] = p.class_rule;
  j["lesion_radius_min"] = p.lesion_radius_min;
  j["lesion_radius_max"] = p.lesion_radius_max;
  j["lesion_radius_factor_malignant"] = p.lesion_radius_factor_malignant;
  j["lesion_amp_benign"] = p.lesion_amp_benign;
  j["lesion_amp_malignant"] = p.lesion_amp_malignant;
  json arr = json::array();
  for (const auto& t : p.resolved_transforms()) {
    json tj;
    tj["gain"] = t.gain;
    tj["bias"] = t.bias;
    tj["nonlinearity"] = t.nonlinearity;
    tj["noise_sigma"] = t.noise_sigma;
    arr.push_back(std::move(tj));
  }
  j["transforms"] = std::move(arr);
  return j;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config: not valid JSON");
  Section top(j, "config");
  ExperimentConfig c;
  c.run_dir = top.get<std::string>("run_dir", "");
  c.seed = top.get<uint64_t>("seed", c.seed);
  c.deterministic = top.get("deterministic", c.deterministic);

  if (const json* data = top.subobject("data"); data) {
    Section s(*data, "data");
    c.manifest = s.get<std::string>("manifest", "");
    c.normalize = s.get("normalize", c.normalize);
    s.finish();
  }
  if (const json* m = top.subobject("model"); m) c.model = parse_model(*m);
  if (const json* m = top.subobject("mask"); m) c.mask = parse_mask(*m);

  if (const json* p = top.subobject("pretrain"); p) {
    Section s(*p, "pretrain");
    c.pretrain.steps = s.get("steps", c.pretrain.steps);
    c.pretrain.batch_size = s.get("batch_size", c.pretrain.batch_size);
    c.pretrain.base_lr = s.get("base_lr", c.pretrain.base_lr);
    c.pretrain.min_lr = s.get("min_lr", c.pretrain.min_lr);
    c.pretrain.weight_decay = s.get("weight_decay", c.pretrain.weight_decay);
    c.pretrain.coupled_weight_decay =
        s.get("coupled_weight_decay", c.pretrain.coupled_weight_decay);
    c.pretrain.checkpoint_every = s.get("checkpoint_every", c.pretrain.checkpoint_every);
    c.pretrain.warmup_steps = s.get("warmup_steps", c.pretrain.warmup_steps);
    c.pretrain.augment_flips = s.get("augment_flips", c.pretrain.augment_flips);
    c.pretrain.crop_extents = s.get("crop_extents", c.pretrain.crop_extents);
    if (!c.pretrain.crop_extents.empty() && c.pretrain.crop_extents.size() != 3)
      throw ConfigError("pretrain.crop_extents: expected 3 entries");
    c.pretrain.resume_from = s.get<std::string>("resume_from", c.pretrain.resume_from);
    s.finish();
  }

  if (const json* f = top.subobject("finetune"); f) {
    Section s(*f, "finetune");
    c.finetune.checkpoint = s.get<std::string>("checkpoint", c.finetune.checkpoint);
    c.finetune.task = s.get<std::string>("task", c.finetune.task);
    c.finetune.steps = s.get("steps", c.finetune.steps);
    c.finetune.batch_size = s.get("batch_size", c.finetune.batch_size);
    c.finetune.base_lr = s.get("base_lr", c.finetune.base_lr);
    c.finetune.min_lr = s.get("min_lr", c.finetune.min_lr);
    c.finetune.weight_decay = s.get("weight_decay", c.finetune.weight_decay);
    c.finetune.coupled_weight_decay =
        s.get("coupled_weight_decay", c.finetune.coupled_weight_decay);
    c.finetune.labeling_ratio = s.get("labeling_ratio", c.finetune.labeling_ratio);
    c.finetune.freeze_encoder = s.get("freeze_encoder", c.finetune.freeze_encoder);
    c.finetune.drop_series_min = s.get("drop_series_min", c.finetune.drop_series_min);
    c.finetune.drop_series_max = s.get("drop_series_max", c.finetune.drop_series_max);
    c.finetune.drop_seed = s.get("drop_seed", c.finetune.drop_seed);
    s.finish();
  }

  if (const json* e = top.subobject("eval"); e) {
    Section s(*e, "eval");
    c.eval.checkpoint = s.get<std::string>("checkpoint", c.eval.checkpoint);
    c.eval.splits = s.get("splits", c.eval.splits);
    s.finish();
  }

  if (const json* g = top.subobject("gen"); g) {
    Section s(*g, "gen");
    c.gen.subjects = s.get("subjects", c.gen.subjects);
    c.gen.label_kind = s.get("label_kind", c.gen.label_kind);
    auto fr = s.get<std::vector<double>>("split_fractions",
                                         {c.gen.split_fractions[0], c.gen.split_fractions[1],
                                          c.gen.split_fractions[2]});
    if (fr.size() != 3) throw ConfigError("gen.split_fractions: expected 3 entries");
    c.gen.split_fractions = {fr[0], fr[1], fr[2]};
    if (const json* p = s.subobject("phantom"); p) c.gen.phantom = parse_phantom(*p);
    s.finish();
  }

  if (const json* a = top.subobject("ablation"); a) {
    Section s(*a, "ablation");
    c.ablation.seeds = s.get("seeds", c.ablation.seeds);
    c.ablation.pretrain_steps = s.get("pretrain_steps", c.ablation.pretrain_steps);
    c.ablation.finetune_steps = s.get("finetune_steps", c.ablation.finetune_steps);
    s.finish();
  }

  if (const json* g = top.subobject("gradcheck"); g) {
    Section s(*g, "gradcheck");
    c.gradcheck.eps = s.get("eps", c.gradcheck.eps);
    s.finish();
  }

  top.finish();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config(text);
}

std::string ExperimentConfig::to_json_string() const {
  json j;
  j["run_dir"] = run_dir;
  j["seed"] = seed;
  j["deterministic"] = deterministic;
  j["data"] = {{"manifest", manifest}, {"normalize", normalize}};
  j["model"] = model_to_json(model);
  j["mask"] = mask_to_json(mask);
  j["pretrain"] = {{"steps", pretrain.steps},
                   {"batch_size", pretrain.batch_size},
                   {"base_lr", pretrain.base_lr},
                   {"min_lr", pretrain.min_lr},
                   {"weight_decay", pretrain.weight_decay},
                   {"coupled_weight_decay", pretrain.coupled_weight_decay},
                   {"checkpoint_every", pretrain.checkpoint_every},
                   {"warmup_steps", pretrain.warmup_steps},
                   {"augment_flips", pretrain.augment_flips},
                   {"crop_extents", pretrain.crop_extents},
                   {"resume_from", pretrain.resume_from}};
  j["finetune"] = {{"checkpoint", finetune.checkpoint},
                   {"task", finetune.task},
                   {"steps", finetune.steps},
                   {"batch_size", finetune.batch_size},
                   {"base_lr", finetune.base_lr},
                   {"min_lr", finetune.min_lr},
                   {"weight_decay", finetune.weight_decay},
                   {"coupled_weight_decay", finetune.coupled_weight_decay},
                   {"labeling_ratio", finetune.labeling_ratio},
                   {"freeze_encoder", finetune.freeze_encoder},
                   {"drop_series_min", finetune.drop_series_min},
                   {"drop_series_max", finetune.drop_series_max},
                   {"drop_seed", finetune.drop_seed}};
  j["eval"] = {{"checkpoint", eval.checkpoint}, {"splits", eval.splits}};
  j["gen"] = {{"subjects", gen.subjects},
              {"label_kind", gen.label_kind},
              {"split_fractions", gen.split_fractions},
              {"phantom", phantom_to_json(gen.phantom)}};
  j["ablation"] = {{"seeds", ablation.seeds},
                   {"pretrain_steps", ablation.pretrain_steps},
                   {"finetune_steps", ablation.finetune_steps}};
  j["gradcheck"] = {{"eps", gradcheck.eps}};
  return j.dump(2);
}

uint64_t fnv1a64(std::string_view data) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : data) {
    h ^= static_cast<uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string fnv1a64_hex(std::string_view data) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(data)));
  return std::string(buf);
}

std::string ExperimentConfig::hash() const { return fnv1a64_hex(to_json_string()); }

}  // namespace csm
