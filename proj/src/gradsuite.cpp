#include "csm/gradsuite.hpp"

#include <deque>
#include <functional>

#include "csm/finetune.hpp"
#include "csm/gradcheck.hpp"
#include "csm/model.hpp"

namespace csm {

namespace {

using Id = Tape<double>::Id;

Tensor<double> random_tensor(std::vector<int64_t> shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values) v = scale * rng.normal();
  return t;
}

// Scalarizes a tensor output with fixed mixing weights so the finite
// difference is well conditioned in every coordinate. `scale` keeps the
// objective magnitude small: directions with a structurally-zero gradient
// (the attention key bias under softmax shift invariance) otherwise measure
// pure f64 rounding noise against the 1e-8 relative-error floor.
Id mix_to_scalar(Tape<double>& tape, Id x, uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Tensor<double> w = Tensor<double>::zeros_like(tape.value(x));
  for (auto& v : w.values)
    v = scale * rng.uniform(0.5, 1.5) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
  auto wc = tape.constant(std::move(w), "mix_weights");
  return tape.sum_all(tape.mul(x, wc, "mix"), "mix_sum");
}

struct Fixture {
  std::deque<Parameter<double>> storage;  // stable addresses
  std::vector<Parameter<double>*> params;

  Parameter<double>* add(const std::string& name, Tensor<double> value) {
    storage.emplace_back(name, std::move(value));
    params.push_back(&storage.back());
    return &storage.back();
  }
};

GradSuiteEntry check(const std::string& name, double tol, double eps, Fixture& fx,
                     const std::function<double(Tape<double>&, bool)>& build) {
  auto eval = [&](bool with_grads) {
    Tape<double> tape;
    return build(tape, with_grads);
  };
  GradCheckReport report = grad_check<double>(fx.params, eval, eps);
  GradSuiteEntry entry;
  entry.name = name;
  entry.max_rel_err = report.max_rel_err;
  entry.tolerance = tol;
  entry.passed = report.max_rel_err < tol;
  return entry;
}

// Binds fixture params as leaves, runs the graph builder, backprops the
// scalar and copies gradients out when requested.
double run_graph(Tape<double>& tape, Fixture& fx, bool with_grads,
                 const std::function<Id(Tape<double>&, const std::vector<Id>&)>& graph) {
  std::vector<Id> ids;
  for (auto* p : fx.params) ids.push_back(tape.leaf(p->value, true, p->name));
  Id loss = graph(tape, ids);
  const double value = tape.value(loss).values[0];
  if (with_grads) {
    tape.backward(loss);
    for (size_t i = 0; i < fx.params.size(); ++i) {
      const auto& g = tape.grad(ids[i]).values;
      for (size_t j = 0; j < g.size(); ++j) fx.params[i]->grad.values[j] += g[j];
    }
  }
  return value;
}

}  // namespace

std::vector<GradSuiteEntry> run_gradcheck_suite(double eps) {
  std::vector<GradSuiteEntry> results;
  const double kPrimitiveTol = 1e-5;
  const double kComposedTol = 1e-4;
  Rng rng(20240901);

  {
    Fixture fx;
    fx.add("a", random_tensor({3, 4}, rng));
    fx.add("b", random_tensor({4, 5}, rng));
    results.push_back(check("matmul", kPrimitiveTol, eps, fx, [&](Tape<double>& t, bool g) {
      return run_graph(t, fx, g, [](Tape<double>& t, const std::vector<Id>& p) {
        return t.sum_all(t.matmul(p[0], p[1]));
      });
    }));
  }
  {
    Fixture fx;
    fx.add("a", random_tensor({3, 4}, rng));
    fx.add("b", random_tensor({5, 4}, rng));
    results.push_back(check("matmul_nt", kPrimitiveTol, eps, fx, [&](Tape<double>& t, bool g) {
      return run_graph(t, fx, g, [](Tape<double>& t, const std::vector<Id>& p) {
        return t.sum_all(t.matmul_nt(p[0], p[1]));
      });
    }));
  }
  {
    Fixture fx;
    fx.add("a", random_tensor({4, 4}, rng));
    fx.add("b", random_tensor({4, 4}, rng));
    results.push_back(check("add", kPrimitiveTol, eps, fx, [&](Tape<double>& t, bool g) {
      return run_graph(t, fx, g, [](Tape<double>& t, const std::vector<Id>& p) {
        return mix_to_scalar(t, t.add(p[0], p[1]), 11);
      });
    }));
  }
  {
    Fixture fx;
    fx.add("a", random_tensor({4, 3}, rng));
    fx.add("row", random_tensor({3}, rng));
    results.push_back(check("add_row", kPrimitiveTol, eps, fx, [&](Tape<double>& t, bool g) {
      return run_graph(t, fx, g, [](Tape<double>& t, const std::vector<Id>& p) {
        return mix_to_scalar(t, t.add_row(p[0], p[1]), 12);
      });
    }));
  }
  {
    Fixture fx;
    fx.add("a", random_tensor({3, 3}, rng));
    results.push_back(check("scale", kPrimitiveTol, eps, fx, [&](Tape<double>& t, bool g) {
      return run_graph(t, fx, g, [](Tape<double>& t, const std::vector<Id>& p) {
        return mix_to_scalar(t, t.scale(p[0], -1.7), 13);
      });
    }));
  }
  {
    Fixture fx;
    fx.add("a", random_tensor({3, 5}, rng));
    fx.add("b", random_tensor({3, 5}, rng));
    results.push_back(check("mul", kPrimitiveTol, eps, fx, [&](Tape<double>& t, bool g) {
      return run_graph(t, fx, g, [](Tape<double>& t, const std::vector<Id>& p) {
        return mix_to_scalar(t, t.mul(p[0], p[1]), 14);
      });
    }));
  }
  {
    Fixture fx;
    fx.add("x", random_tensor({4, 6}, rng));
    results.push_back(check("gelu", kPrimitiveTol, eps, fx, [&](Tape<double>& t, bool g) {
      return run_graph(t, fx, g, [](Tape<double>& t, const std::vector<Id>& p) {
        return mix_to_scalar(t, t.gelu(p[0]), 15);
      });
    }));
  }
  {
    Fixture fx;
    fx.add("x", random_tensor({4, 6}, rng));
    results.push_back(check("sigmoid", kPrimitiveTol, eps, fx, [&](Tape<double>& t, bool g) {
      return run_graph(t, fx, g, [](Tape<double>& t, const std::vector<Id>& p) {
        return mix_to_scalar(t, t.sigmoid(p[0]), 16);
      });
    }));
  }
  {
    Fixture fx;
    fx.add("x", random_tensor({5, 8}, rng));
    fx.add("gamma", random_tensor({8}, rng, 0.5));
    fx.add("beta", random_tensor({8}, rng, 0.5));
    results.push_back(check("layer_norm", kPrimitiveTol, eps, fx, [&](Tape<double>& t, bool g) {
      return run_graph(t, fx, g, [](Tape<double>& t, const std::vector<Id>& p) {
        return mix_to_scalar(t, t.layer_norm(p[0], p[1], p[2], 1e-5), 17);
      });
    }));
  }
  {
    Fixture fx;
    fx.add("q", random_tensor({6, 4}, rng));
    fx.add("k", random_tensor({6, 4}, rng));
    fx.add("v", random_tensor({6, 4}, rng));
    results.push_back(
        check("softmax_attention", kPrimitiveTol, eps, fx, [&](Tape<double>& t, bool g) {
          return run_graph(t, fx, g, [](Tape<double>& t, const std::vector<Id>& p) {
            auto scores = t.scale(t.matmul_nt(p[0], p[1]), 0.5);
            auto weights = t.softmax_rows(scores);
            return mix_to_scalar(t, t.matmul(weights, p[2]), 18);
          });
        }));
  }
  {
    Fixture fx;
    fx.add("x", random_tensor({4, 6}, rng));
    results.push_back(
        check("slice_concat", kPrimitiveTol, eps, fx, [&](Tape<double>& t, bool g) {
          return run_graph(t, fx, g, [](Tape<double>& t, const std::vector<Id>& p) {
            auto left = t.slice_cols(p[0], 0, 2);
            auto right = t.slice_cols(p[0], 2, 6);
            return mix_to_scalar(t, t.concat_cols({right, left}), 19);
          });
        }));
  }
  {
    Fixture fx;
    fx.add("x", random_tensor({5, 3}, rng));
    results.push_back(check("mean_rows", kPrimitiveTol, eps, fx, [&](Tape<double>& t, bool g) {
      return run_graph(t, fx, g, [](Tape<double>& t, const std::vector<Id>& p) {
        return mix_to_scalar(t, t.mean_rows(p[0]), 20);
      });
    }));
  }
  {
    Fixture fx;
    fx.add("x", random_tensor({6, 4}, rng));
    results.push_back(
        check("mean_series_groups", kPrimitiveTol, eps, fx, [&](Tape<double>& t, bool g) {
          return run_graph(t, fx, g, [](Tape<double>& t, const std::vector<Id>& p) {
            return mix_to_scalar(t, t.mean_series_groups(p[0], 2, 3), 21);
          });
        }));
  }
  {
    Fixture fx;
    fx.add("pred", random_tensor({6, 4}, rng));
    Rng trng(99);
    Tensor<double> target = random_tensor({6, 4}, trng);
    results.push_back(
        check("masked_mse", kPrimitiveTol, eps, fx, [&, target](Tape<double>& t, bool g) {
          return run_graph(t, fx, g, [&target](Tape<double>& t, const std::vector<Id>& p) {
            return t.masked_mse(p[0], target, {0, 2, 5});
          });
        }));
  }
  {
    Fixture fx;
    fx.add("logits", random_tensor({1, 2}, rng));
    results.push_back(
        check("cross_entropy", kPrimitiveTol, eps, fx, [&](Tape<double>& t, bool g) {
          return run_graph(t, fx, g, [](Tape<double>& t, const std::vector<Id>& p) {
            return t.cross_entropy_logits(p[0], 1);
          });
        }));
  }
  {
    Fixture fx;
    fx.add("scores", random_tensor({4, 6}, rng));
    Rng trng(7);
    Tensor<double> target({4, 6});
    for (auto& v : target.values) v = trng.bernoulli(0.4) ? 1.0 : 0.0;
    results.push_back(
        check("dice_loss", kPrimitiveTol, eps, fx, [&, target](Tape<double>& t, bool g) {
          return run_graph(t, fx, g, [&target](Tape<double>& t, const std::vector<Id>& p) {
            return t.dice_loss(t.sigmoid(p[0]), target);
          });
        }));
  }
  {
    Fixture fx;
    fx.add("x", random_tensor({4, 5}, rng));
    fx.add("pos", random_tensor({6, 5}, rng));
    fx.add("series", random_tensor({3, 5}, rng));
    std::vector<Slot> slots{{0, 1}, {0, 4}, {2, 1}, {1, 0}};
    results.push_back(
        check("add_embeddings", kPrimitiveTol, eps, fx, [&, slots](Tape<double>& t, bool g) {
          return run_graph(t, fx, g, [&slots](Tape<double>& t, const std::vector<Id>& p) {
            return mix_to_scalar(t, t.add_embeddings(p[0], p[1], p[2], slots), 22);
          });
        }));
  }
  {
    Fixture fx;
    fx.add("visible", random_tensor({3, 4}, rng));
    fx.add("mask_token", random_tensor({1, 4}, rng));
    fx.add("pos", random_tensor({3, 4}, rng));
    fx.add("series", random_tensor({2, 4}, rng));
    std::vector<int64_t> vmap{0, -1, 1, -1, 2, -1};  // 2 series x 3 tokens
    results.push_back(
        check("assemble_slots", kPrimitiveTol, eps, fx, [&, vmap](Tape<double>& t, bool g) {
          return run_graph(t, fx, g, [&vmap](Tape<double>& t, const std::vector<Id>& p) {
            return mix_to_scalar(t, t.assemble_slots(p[0], p[1], p[2], p[3], vmap, 2, 3), 23);
          });
        }));
  }
  {
    // One full pre-norm block, all 16 parameters plus the input.
    Fixture fx;
    const int64_t d = 8;
    fx.add("x", random_tensor({5, d}, rng, 0.7));
    fx.add("ln1.g", random_tensor({d}, rng, 0.3));
    fx.add("ln1.b", random_tensor({d}, rng, 0.3));
    fx.add("wq", random_tensor({d, d}, rng, 0.4));
    fx.add("bq", random_tensor({d}, rng, 0.2));
    fx.add("wk", random_tensor({d, d}, rng, 0.4));
    fx.add("bk", random_tensor({d}, rng, 0.2));
    fx.add("wv", random_tensor({d, d}, rng, 0.4));
    fx.add("bv", random_tensor({d}, rng, 0.2));
    fx.add("wo", random_tensor({d, d}, rng, 0.4));
    fx.add("bo", random_tensor({d}, rng, 0.2));
    fx.add("ln2.g", random_tensor({d}, rng, 0.3));
    fx.add("ln2.b", random_tensor({d}, rng, 0.3));
    // ln gammas near 1 keep the normalized stream well scaled
    for (auto& v : fx.storage[1].value.values) v += 1.0;
    for (auto& v : fx.storage[11].value.values) v += 1.0;
    results.push_back(
        check("transformer_block", kComposedTol, eps, fx, [&](Tape<double>& t, bool g) {
          return run_graph(t, fx, g, [](Tape<double>& t, const std::vector<Id>& p) {
            Rng wr(5);
            Tensor<double> w1 = random_tensor({8, 32}, wr, 0.3);
            Tensor<double> b1 = random_tensor({32}, wr, 0.1);
            Tensor<double> w2 = random_tensor({32, 8}, wr, 0.3);
            Tensor<double> b2 = random_tensor({8}, wr, 0.1);
            BlockIds blk{p[1], p[2], p[3], p[4], p[5], p[6], p[7], p[8], p[9], p[10],
                         p[11], p[12], t.leaf(w1, false, "w1"), t.leaf(b1, false, "b1"),
                         t.leaf(w2, false, "w2"), t.leaf(b2, false, "b2")};
            return mix_to_scalar(t, transformer_block(t, p[0], blk, 2, 1e-5), 24, 0.002);
          });
        }));
  }
  {
    // Composite CSM objective on a tiny model: every model parameter.
    ModelConfig tiny;
    tiny.d_enc = 8;
    tiny.d_dec = 8;
    tiny.enc_depth = 2;
    tiny.dec_depth = 1;
    tiny.enc_heads = 2;
    tiny.dec_heads = 2;
    tiny.patch_edge = 2;
    tiny.s_max = 2;
    tiny.n_max = 8;
    CsmModel<double> model(tiny, 77);

    MultiSeriesVolume vol = MultiSeriesVolume::zeros("tiny", {4, 4, 4}, 2);
    Rng vr(31);
    for (auto& s : vol.series)
      for (auto& v : s) v = static_cast<float>(vr.normal());
    TokenGrid grid = patchify(vol, 2);
    MaskConfig mask;
    mask.intra_ratio = 0.5;
    mask.inter_prob = 1.0;
    Rng mr(8);
    MaskPlan plan = sample_mask_plan(2, 8, mask, mr);

    auto eval = [&](bool with_grads) {
      Tape<double> tape;
      auto binding = model.bind(tape);
      auto fwd = csm_objective(tape, model, binding, grid, plan, mask);
      auto loss = tape.scale(fwd.loss, 0.02, "conditioning_scale");
      const double v = tape.value(loss).values[0];
      if (with_grads) {
        tape.backward(loss);
        model.accumulate_grads(tape, binding);
      }
      return v;
    };
    GradCheckReport report = grad_check<double>(model.parameters(), eval, eps);
    GradSuiteEntry entry;
    entry.name = "csm_objective_end_to_end";
    entry.max_rel_err = report.max_rel_err;
    entry.tolerance = kComposedTol;
    entry.passed = report.max_rel_err < kComposedTol;
    results.push_back(entry);
  }
  {
    // Composite classification objective (embed -> encode -> pool -> head).
    ModelConfig tiny;
    tiny.d_enc = 8;
    tiny.d_dec = 8;
    tiny.enc_depth = 1;
    tiny.dec_depth = 0;
    tiny.enc_heads = 2;
    tiny.dec_heads = 2;
    tiny.patch_edge = 2;
    tiny.s_max = 2;
    tiny.n_max = 8;
    CsmModel<double> model(tiny, 78);
    Parameter<double> hw("task.cls.w", random_tensor({8, 2}, rng, 0.5));
    Parameter<double> hb("task.cls.b", random_tensor({2}, rng, 0.2));

    MultiSeriesVolume vol = MultiSeriesVolume::zeros("tiny", {4, 4, 4}, 2);
    Rng vr(32);
    for (auto& s : vol.series)
      for (auto& v : s) v = static_cast<float>(vr.normal());
    TokenGrid grid = patchify(vol, 2);
    MaskPlan plan = all_visible_plan(2, 8);

    std::vector<Parameter<double>*> params = model.parameters();
    params.push_back(&hw);
    params.push_back(&hb);
    auto eval = [&](bool with_grads) {
      Tape<double> tape;
      auto binding = model.bind(tape);
      auto hwid = tape.leaf(hw.value, true, hw.name);
      auto hbid = tape.leaf(hb.value, true, hb.name);
      auto embedded = embed_visible(tape, model, binding, grid, plan);
      auto latent = encode(tape, model, binding, embedded.id);
      auto pooled = tape.mean_rows(latent);
      auto logits = tape.add_row(tape.matmul(pooled, hwid), hbid);
      auto loss = tape.scale(tape.cross_entropy_logits(logits, 1), 0.02, "conditioning_scale");
      const double v = tape.value(loss).values[0];
      if (with_grads) {
        tape.backward(loss);
        model.accumulate_grads(tape, binding);
        for (size_t j = 0; j < hw.grad.values.size(); ++j)
          hw.grad.values[j] += tape.grad(hwid).values[j];
        for (size_t j = 0; j < hb.grad.values.size(); ++j)
          hb.grad.values[j] += tape.grad(hbid).values[j];
      }
      return v;
    };
    GradCheckReport report = grad_check<double>(params, eval, eps);
    GradSuiteEntry entry;
    entry.name = "classification_objective_end_to_end";
    entry.max_rel_err = report.max_rel_err;
    entry.tolerance = kComposedTol;
    entry.passed = report.max_rel_err < kComposedTol;
    results.push_back(entry);
  }

  return results;
}

}  // namespace csm
