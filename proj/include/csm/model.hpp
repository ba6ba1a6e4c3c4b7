#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "csm/masking.hpp"
#include "csm/optim.hpp"
#include "csm/rng.hpp"
#include "csm/tape.hpp"
#include "csm/volume.hpp"

namespace csm {

struct ModelConfig {
  int d_enc = 64;
  int d_dec = 48;
  int enc_depth = 4;
  int dec_depth = 2;
  int enc_heads = 4;
  int dec_heads = 4;
  int patch_edge = 16;
  int s_max = 4;
  int n_max = 216;
  bool dropout = false;  // reserved flag; attention stays exact softmax
  double ln_eps = 1e-5;

  int64_t patch_volume() const {
    return static_cast<int64_t>(patch_edge) * patch_edge * patch_edge;
  }

  void validate() const {
    if (d_enc < 1 || d_dec < 1 || patch_edge < 1 || s_max < 1 || n_max < 1)
      throw ConfigError("model: dimensions must be positive");
    if (enc_depth < 0 || dec_depth < 0) throw ConfigError("model: negative depth");
    if (enc_heads < 1 || d_enc % enc_heads)
      throw ConfigError("model.d_enc: must be divisible by enc_heads");
    if (dec_heads < 1 || d_dec % dec_heads)
      throw ConfigError("model.d_dec: must be divisible by dec_heads");
    if (!(ln_eps > 0)) throw ConfigError("model.ln_eps: must be positive");
    if (dropout) throw ConfigError("model.dropout: not supported in this build");
  }

  bool operator==(const ModelConfig&) const = default;
};

// Parameter ids of one pre-norm transformer block on some tape.
struct BlockIds {
  using Id = int32_t;
  Id ln1_g, ln1_b;
  Id wq, bq, wk, bk, wv, bv, wo, bo;
  Id ln2_g, ln2_b;
  Id mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

// Pre-norm residual block: x + attention(norm(x)), then + mlp(norm(.)).
// No causal mask; position information is added upstream, so the block is
// equivariant under row permutations.
template <typename T>
typename Tape<T>::Id transformer_block(Tape<T>& tape, typename Tape<T>::Id x,
                                       const BlockIds& blk, int heads, T ln_eps,
                                       const std::string& name = "block") {
  using Id = typename Tape<T>::Id;
  const int64_t d = tape.value(x).cols();
  if (heads < 1 || d % heads) throw ConfigError(name + ": width not divisible by head count");
  const int64_t hd = d / heads;
  const T att_scale = T(1) / std::sqrt(static_cast<T>(hd));

  Id h = tape.layer_norm(x, blk.ln1_g, blk.ln1_b, ln_eps, name + ".ln1");
  Id q = tape.add_row(tape.matmul(h, blk.wq, name + ".q"), blk.bq, name + ".q_bias");
  Id k = tape.add_row(tape.matmul(h, blk.wk, name + ".k"), blk.bk, name + ".k_bias");
  Id v = tape.add_row(tape.matmul(h, blk.wv, name + ".v"), blk.bv, name + ".v_bias");
  std::vector<Id> head_outs;
  head_outs.reserve(static_cast<size_t>(heads));
  for (int hh = 0; hh < heads; ++hh) {
    const int64_t c0 = hh * hd, c1 = c0 + hd;
    Id qh = tape.slice_cols(q, c0, c1, name + ".q_head");
    Id kh = tape.slice_cols(k, c0, c1, name + ".k_head");
    Id vh = tape.slice_cols(v, c0, c1, name + ".v_head");
    Id scores = tape.scale(tape.matmul_nt(qh, kh, name + ".scores"), att_scale,
                           name + ".scores_scale");
    Id weights = tape.softmax_rows(scores, name + ".attention.softmax");
    head_outs.push_back(tape.matmul(weights, vh, name + ".attention.mix"));
  }
  Id merged = heads == 1 ? head_outs[0] : tape.concat_cols(head_outs, name + ".head_concat");
  Id att = tape.add_row(tape.matmul(merged, blk.wo, name + ".attn_proj"), blk.bo,
                        name + ".attn_proj_bias");
  Id x1 = tape.add(x, att, name + ".residual1");

  Id h2 = tape.layer_norm(x1, blk.ln2_g, blk.ln2_b, ln_eps, name + ".ln2");
  Id m1 = tape.add_row(tape.matmul(h2, blk.mlp_w1, name + ".mlp1"), blk.mlp_b1,
                       name + ".mlp1_bias");
  Id act = tape.gelu(m1, name + ".gelu");
  Id m2 = tape.add_row(tape.matmul(act, blk.mlp_w2, name + ".mlp2"), blk.mlp_b2,
                       name + ".mlp2_bias");
  return tape.add(x1, m2, name + ".residual2");
}

// The CSM encoder-decoder parameter set. Tables are shared across subjects
// with any series count s <= s_max and grid size N <= n_max.
template <typename T>
class CsmModel {
 public:
  using Id = typename Tape<T>::Id;

  CsmModel(ModelConfig config, uint64_t seed) : config_(config) {
    config_.validate();
    Rng rng(mix_seed(seed, "param-init"));
    const int64_t pv = config_.patch_volume();
    add_weight("proj.w", {pv, config_.d_enc}, rng);
    add_zeros("proj.b", {config_.d_enc});
    add_table("enc.pos", {config_.n_max, config_.d_enc}, rng);
    add_table("enc.series", {config_.s_max, config_.d_enc}, rng);
    for (int i = 0; i < config_.enc_depth; ++i)
      add_block("enc.blk" + std::to_string(i), config_.d_enc, rng);
    add_weight("adapter.w", {config_.d_enc, config_.d_dec}, rng);
    add_zeros("adapter.b", {config_.d_dec});
    add_table("dec.mask_token", {1, config_.d_dec}, rng);
    add_table("dec.pos", {config_.n_max, config_.d_dec}, rng);
    add_table("dec.series", {config_.s_max, config_.d_dec}, rng);
    for (int i = 0; i < config_.dec_depth; ++i)
      add_block("dec.blk" + std::to_string(i), config_.d_dec, rng);
    add_weight("out.w", {config_.d_dec, pv}, rng);
    add_zeros("out.b", {pv});
  }

  const ModelConfig& config() const { return config_; }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.get());
    return out;
  }

  // Everything the fine-tuning encoder uses: projection, encoder tables and
  // encoder blocks. Decoder-side parameters are excluded.
  std::vector<Parameter<T>*> encoder_parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& p : params_) {
      if (p->name.rfind("proj.", 0) == 0 || p->name.rfind("enc.", 0) == 0) out.push_back(p.get());
    }
    return out;
  }

  Parameter<T>& param(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw UsageError("model: unknown parameter " + name);
    return *params_[it->second];
  }

  void zero_grads() {
    for (auto& p : params_) p->zero_grad();
  }

  // Registers every parameter as a tape leaf; call once per tape.
  struct Binding {
    std::vector<Id> ids;  // parallel to parameters()
    std::map<std::string, Id> by_name;
    Id of(const std::string& name) const {
      auto it = by_name.find(name);
      if (it == by_name.end()) throw UsageError("binding: unknown parameter " + name);
      return it->second;
    }
  };

  Binding bind(Tape<T>& tape) {
    Binding b;
    b.ids.reserve(params_.size());
    for (auto& p : params_) {
      Id id = tape.leaf(p->value, true, p->name);
      b.ids.push_back(id);
      b.by_name[p->name] = id;
    }
    return b;
  }

  // Adds tape gradients into the parameters' grad buffers.
  void accumulate_grads(Tape<T>& tape, const Binding& b) {
    for (size_t i = 0; i < params_.size(); ++i) {
      const auto& g = tape.grad(b.ids[i]).values;
      auto& dst = params_[i]->grad.values;
      for (size_t j = 0; j < dst.size(); ++j) dst[j] += g[j];
    }
  }

  BlockIds block_ids(const Binding& b, const std::string& prefix) const {
    return BlockIds{b.of(prefix + ".ln1.g"), b.of(prefix + ".ln1.b"),
                    b.of(prefix + ".attn.wq"), b.of(prefix + ".attn.bq"),
                    b.of(prefix + ".attn.wk"), b.of(prefix + ".attn.bk"),
                    b.of(prefix + ".attn.wv"), b.of(prefix + ".attn.bv"),
                    b.of(prefix + ".attn.wo"), b.of(prefix + ".attn.bo"),
                    b.of(prefix + ".ln2.g"), b.of(prefix + ".ln2.b"),
                    b.of(prefix + ".mlp.w1"), b.of(prefix + ".mlp.b1"),
                    b.of(prefix + ".mlp.w2"), b.of(prefix + ".mlp.b2")};
  }

 private:
  void add_param(std::string name, Tensor<T> value) {
    by_name_[name] = params_.size();
    params_.push_back(std::make_unique<Parameter<T>>(std::move(name), std::move(value)));
  }

  // Embedding tables and the mask token: small fixed-scale normal init.
  void add_table(std::string name, std::vector<int64_t> shape, Rng& rng) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.values) v = static_cast<T>(rng.normal(0.0, 0.02));
    add_param(std::move(name), std::move(t));
  }

  // Dense weights: fan-in scaled normal init (rows are the input dimension).
  void add_weight(std::string name, std::vector<int64_t> shape, Rng& rng) {
    Tensor<T> t(shape);
    const double std = 1.0 / std::sqrt(static_cast<double>(shape[0]));
    for (auto& v : t.values) v = static_cast<T>(rng.normal(0.0, std));
    add_param(std::move(name), std::move(t));
  }

  void add_zeros(std::string name, std::vector<int64_t> shape) {
    add_param(std::move(name), Tensor<T>(std::move(shape)));
  }

  void add_ones(std::string name, std::vector<int64_t> shape) {
    Tensor<T> t(std::move(shape));
    std::fill(t.values.begin(), t.values.end(), T(1));
    add_param(std::move(name), std::move(t));
  }

  void add_block(const std::string& prefix, int64_t d, Rng& rng) {
    add_ones(prefix + ".ln1.g", {d});
    add_zeros(prefix + ".ln1.b", {d});
    add_weight(prefix + ".attn.wq", {d, d}, rng);
    add_zeros(prefix + ".attn.bq", {d});
    add_weight(prefix + ".attn.wk", {d, d}, rng);
    add_zeros(prefix + ".attn.bk", {d});
    add_weight(prefix + ".attn.wv", {d, d}, rng);
    add_zeros(prefix + ".attn.bv", {d});
    add_weight(prefix + ".attn.wo", {d, d}, rng);
    add_zeros(prefix + ".attn.bo", {d});
    add_ones(prefix + ".ln2.g", {d});
    add_zeros(prefix + ".ln2.b", {d});
    add_weight(prefix + ".mlp.w1", {d, 4 * d}, rng);
    add_zeros(prefix + ".mlp.b1", {4 * d});
    add_weight(prefix + ".mlp.w2", {4 * d, d}, rng);
    add_zeros(prefix + ".mlp.b2", {d});
  }

  ModelConfig config_;
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::map<std::string, size_t> by_name_;
};

// Canonical visible-slot order: series-major, ascending token index, skipping
// fully-masked and absent series.
inline std::vector<Slot> visible_slots(const MaskPlan& plan) {
  std::vector<Slot> slots;
  for (int j = 0; j < plan.series_count; ++j) {
    if (plan.is_fully_masked(j) || plan.is_absent(j)) continue;
    for (int i : plan.unmasked(j)) slots.push_back(Slot{j, i});
  }
  return slots;
}

inline MaskPlan all_visible_plan(int series_count, int tokens_per_series,
                                 const std::vector<uint8_t>* presence = nullptr) {
  MaskPlan plan;
  plan.series_count = series_count;
  plan.tokens_per_series = tokens_per_series;
  plan.masked.resize(static_cast<size_t>(series_count));
  if (presence) {
    std::vector<int> all(static_cast<size_t>(tokens_per_series));
    std::iota(all.begin(), all.end(), 0);
    for (int j = 0; j < series_count; ++j)
      if (!(*presence)[static_cast<size_t>(j)]) {
        plan.absent.push_back(j);
        plan.masked[static_cast<size_t>(j)] = all;
      }
  }
  plan.validate();
  return plan;
}

template <typename T>
struct EmbeddedVisible {
  typename Tape<T>::Id id = -1;
  std::vector<Slot> slots;
};

// projection(token) + position[i] + series[j] for every visible slot, in
// canonical order. Token values enter as constants; their gradient is never
// materialized.
template <typename T>
EmbeddedVisible<T> embed_visible(Tape<T>& tape, CsmModel<T>& model,
                                 const typename CsmModel<T>::Binding& b, const TokenGrid& tokens,
                                 const MaskPlan& plan) {
  const ModelConfig& cfg = model.config();
  const int64_t n = tokens.tokens_per_series();
  const int64_t pv = tokens.patch_volume();
  if (plan.series_count != tokens.series_count() ||
      plan.tokens_per_series != static_cast<int>(n))
    throw UsageError("embed_visible: plan does not match token grid");
  if (pv != cfg.patch_volume()) throw UsageError("embed_visible: patch size mismatch");
  if (n > cfg.n_max || tokens.series_count() > cfg.s_max)
    throw UsageError("embed_visible: grid exceeds model capacity (n_max/s_max)");

  EmbeddedVisible<T> out;
  out.slots = visible_slots(plan);
  if (out.slots.empty()) throw UsageError("embed_visible: no visible tokens");
  Tensor<T> gathered({static_cast<int64_t>(out.slots.size()), pv});
  for (size_t r = 0; r < out.slots.size(); ++r) {
    const Slot& s = out.slots[r];
    const TensorF& grid = tokens.tokens[static_cast<size_t>(s.series)];
    const float* src = grid.values.data() + static_cast<int64_t>(s.token) * pv;
    T* dst = gathered.values.data() + static_cast<int64_t>(r) * pv;
    for (int64_t c = 0; c < pv; ++c) dst[c] = static_cast<T>(src[c]);
  }
  auto in = tape.constant(std::move(gathered), "visible_tokens");
  auto proj = tape.add_row(tape.matmul(in, b.of("proj.w"), "patch_proj"), b.of("proj.b"),
                           "patch_proj_bias");
  out.id = tape.add_embeddings(proj, b.of("enc.pos"), b.of("enc.series"), out.slots,
                               "encoder_embeddings");
  return out;
}

template <typename T>
typename Tape<T>::Id encode(Tape<T>& tape, CsmModel<T>& model,
                            const typename CsmModel<T>::Binding& b, typename Tape<T>::Id x) {
  if (tape.value(x).rows() < 1) throw UsageError("encode: empty visible sequence");
  const ModelConfig& cfg = model.config();
  for (int i = 0; i < cfg.enc_depth; ++i)
    x = transformer_block(tape, x, model.block_ids(b, "enc.blk" + std::to_string(i)),
                          cfg.enc_heads, static_cast<T>(cfg.ln_eps),
                          "enc.blk" + std::to_string(i));
  return x;
}

// Decoder over all s*N slots: adapted latent rows fill the visible slots,
// mask_token + decoder tables fill the rest; ends in the voxel output head.
// The returned tensor has shape (s*N, p^3) in series-major slot order.
template <typename T>
typename Tape<T>::Id decode(Tape<T>& tape, CsmModel<T>& model,
                            const typename CsmModel<T>::Binding& b, typename Tape<T>::Id latent,
                            const std::vector<Slot>& slots, const MaskPlan& plan) {
  const ModelConfig& cfg = model.config();
  if (tape.value(latent).rows() != static_cast<int64_t>(slots.size()))
    throw UsageError("decode: latent row count does not match visible slots");
  auto adapted = tape.add_row(tape.matmul(latent, b.of("adapter.w"), "adapter"),
                              b.of("adapter.b"), "adapter_bias");
  const int64_t n = plan.tokens_per_series;
  std::vector<int64_t> visible_row(static_cast<size_t>(plan.series_count) * n, -1);
  for (size_t r = 0; r < slots.size(); ++r)
    visible_row[static_cast<size_t>(slots[r].series) * n + slots[r].token] =
        static_cast<int64_t>(r);
  auto x = tape.assemble_slots(adapted, b.of("dec.mask_token"), b.of("dec.pos"),
                               b.of("dec.series"), std::move(visible_row), plan.series_count,
                               static_cast<int>(n), "decoder_slots");
  for (int i = 0; i < cfg.dec_depth; ++i)
    x = transformer_block(tape, x, model.block_ids(b, "dec.blk" + std::to_string(i)),
                          cfg.dec_heads, static_cast<T>(cfg.ln_eps),
                          "dec.blk" + std::to_string(i));
  return tape.add_row(tape.matmul(x, b.of("out.w"), "output_head"), b.of("out.b"),
                      "output_head_bias");
}

// Slot rows (series-major) whose masked tokens count toward the loss.
inline std::vector<int64_t> loss_rows(const MaskPlan& plan, const MaskConfig& config) {
  std::vector<int64_t> rows;
  const int64_t n = plan.tokens_per_series;
  for (int j = 0; j < plan.series_count; ++j) {
    if (!plan.loss_eligible(j, config)) continue;
    for (int i : plan.masked[static_cast<size_t>(j)]) rows.push_back(j * n + i);
  }
  return rows;
}

// Mean squared error over loss-eligible masked voxels.
template <typename T>
typename Tape<T>::Id reconstruction_loss(Tape<T>& tape, typename Tape<T>::Id recon,
                                         const TokenGrid& target, const MaskPlan& plan,
                                         const MaskConfig& config) {
  const int64_t n = target.tokens_per_series();
  const int64_t pv = target.patch_volume();
  if (tape.value(recon).rows() != static_cast<int64_t>(target.series_count()) * n ||
      tape.value(recon).cols() != pv)
    throw UsageError("reconstruction_loss: shape mismatch");
  Tensor<T> flat({static_cast<int64_t>(target.series_count()) * n, pv});
  for (int j = 0; j < target.series_count(); ++j) {
    const auto& src = target.tokens[static_cast<size_t>(j)].values;
    T* dst = flat.values.data() + static_cast<int64_t>(j) * n * pv;
    for (size_t c = 0; c < src.size(); ++c) dst[c] = static_cast<T>(src[c]);
  }
  std::vector<int64_t> rows = loss_rows(plan, config);
  if (rows.empty()) throw ConfigError("reconstruction_loss: empty eligible set");
  return tape.masked_mse(recon, flat, std::move(rows), "reconstruction_loss");
}

// Full self-supervised objective for one subject.
template <typename T>
struct CsmForward {
  typename Tape<T>::Id recon = -1;
  typename Tape<T>::Id loss = -1;
  std::vector<Slot> slots;
};

template <typename T>
CsmForward<T> csm_objective(Tape<T>& tape, CsmModel<T>& model,
                            const typename CsmModel<T>::Binding& b, const TokenGrid& tokens,
                            const MaskPlan& plan, const MaskConfig& config) {
  CsmForward<T> out;
  auto embedded = embed_visible(tape, model, b, tokens, plan);
  out.slots = embedded.slots;
  auto latent = encode(tape, model, b, embedded.id);
  out.recon = decode(tape, model, b, latent, embedded.slots, plan);
  out.loss = reconstruction_loss<T>(tape, out.recon, tokens, plan, config);
  return out;
}

}  // namespace csm
