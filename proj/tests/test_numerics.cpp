#include <cmath>

#include "doctest.h"

#include "csm/gradcheck.hpp"
#include "csm/gradsuite.hpp"
#include "csm/model.hpp"
#include "csm/optim.hpp"
#include "csm/tape.hpp"

using namespace csm;

TEST_CASE("backward: quadratic and non-participating leaves") {
  Tape<double> tape;
  auto w = tape.leaf(Tensor<double>::scalar(3.0), true, "w");
  auto unused = tape.leaf(Tensor<double>::scalar(5.0), true, "unused");
  auto loss = tape.mul(w, w);
  tape.backward(loss);
  CHECK(tape.grad(w).values[0] == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(tape.grad(unused).values[0] == 0.0);  // exactly zero
}

TEST_CASE("backward: loss must be scalar, tape traversed once") {
  Tape<double> tape;
  auto x = tape.leaf(Tensor<double>({2, 2}), true, "x");
  CHECK_THROWS_AS(tape.backward(x), UsageError);
  auto s = tape.sum_all(x);
  tape.backward(s);
  CHECK_THROWS_AS(tape.backward(s), UsageError);
}

TEST_CASE("tape: finite checks name the failing operation") {
  Tape<float> tape;
  auto x = tape.leaf(Tensor<float>::scalar(1e20f), true, "x");
  auto big = tape.scale(x, 1e10f, "enc.blk0.attn_proj");  // 1e30, still finite
  try {
    tape.scale(big, 1e10f, "enc.blk0.mlp2");  // overflows f32 here
    CHECK(false);
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("enc.blk0.mlp2") != std::string::npos);
  }
}

TEST_CASE("grad_check: quadratic, constant and determinism contract") {
  Parameter<double> w("w", Tensor<double>::scalar(3.0));
  std::vector<Parameter<double>*> params{&w};

  auto quadratic = [&](bool with_grads) {
    Tape<double> tape;
    auto id = tape.leaf(w.value, true, "w");
    auto loss = tape.mul(id, id);
    if (with_grads) {
      tape.backward(loss);
      w.grad.values[0] += tape.grad(id).values[0];
    }
    return tape.value(loss).values[0];
  };
  auto report = grad_check<double>(params, quadratic, 1e-5);
  CHECK(report.max_rel_err < 1e-8);
  CHECK(report.coordinates_checked == 1);

  auto constant = [&](bool) { return 7.25; };
  w.zero_grad();
  auto creport = grad_check<double>(params, constant, 1e-5);
  CHECK(creport.max_rel_err == 0.0);

  int calls = 0;
  auto flaky = [&](bool) { return static_cast<double>(calls++); };
  CHECK_THROWS_AS(grad_check<double>(params, flaky, 1e-5), UsageError);
}

TEST_CASE("adam: documented single-step behaviours") {
  SUBCASE("zero gradient, zero moments, no decay: parameters unchanged") {
    Parameter<float> p("p", Tensor<float>::scalar(1.5f));
    std::vector<Parameter<float>*> params{&p};
    AdamState<float> state = AdamState<float>::init(params);
    adam_step(params, state, 0.1, AdamConfig{});
    CHECK(p.value.values[0] == 1.5f);
    CHECK(state.t == 1);
  }
  SUBCASE("unit gradient at step 1: bias-corrected update is about -lr") {
    Parameter<double> p("p", Tensor<double>::scalar(0.0));
    p.grad.values[0] = 1.0;
    std::vector<Parameter<double>*> params{&p};
    AdamState<double> state = AdamState<double>::init(params);
    adam_step(params, state, 0.1, AdamConfig{});
    CHECK(p.value.values[0] == doctest::Approx(-0.1).epsilon(1e-6));
  }
  SUBCASE("decoupled decay with zero gradient") {
    Parameter<double> p("p", Tensor<double>::scalar(1.0));
    std::vector<Parameter<double>*> params{&p};
    AdamState<double> state = AdamState<double>::init(params);
    AdamConfig cfg;
    cfg.weight_decay = 0.01;
    adam_step(params, state, 0.1, cfg);
    CHECK(p.value.values[0] == doctest::Approx(0.999).epsilon(1e-12));
  }
  SUBCASE("coupled decay folds into the gradient path") {
    Parameter<double> p("p", Tensor<double>::scalar(1.0));
    std::vector<Parameter<double>*> params{&p};
    AdamState<double> state = AdamState<double>::init(params);
    AdamConfig cfg;
    cfg.weight_decay = 0.01;
    cfg.coupled_weight_decay = true;
    adam_step(params, state, 0.1, cfg);
    // Gradient 0.01 from decay alone; bias-corrected update is about -lr.
    CHECK(p.value.values[0] == doctest::Approx(0.9).epsilon(1e-4));
  }
  SUBCASE("shape mismatch is rejected") {
    Parameter<double> p("p", Tensor<double>::scalar(1.0));
    std::vector<Parameter<double>*> params{&p};
    AdamState<double> state = AdamState<double>::init(params);
    state.m[0] = Tensor<double>({2});
    CHECK_THROWS_AS(adam_step(params, state, 0.1, AdamConfig{}), UsageError);
  }
}

TEST_CASE("cosine schedule: endpoints, midpoint, monotonicity, range") {
  LrSchedule s{1e-3, 0.0, 1000};
  CHECK(cosine_lr(0, s) == doctest::Approx(1e-3).epsilon(1e-15));
  CHECK(cosine_lr(1000, s) == doctest::Approx(0.0).epsilon(1e-18));
  CHECK(cosine_lr(500, s) == doctest::Approx(5e-4).epsilon(1e-12));
  double prev = cosine_lr(0, s);
  for (int64_t step = 1; step <= 1000; ++step) {
    const double lr = cosine_lr(step, s);
    CHECK(lr <= prev + 1e-18);
    prev = lr;
  }
  LrSchedule with_floor{1e-3, 1e-5, 100};
  CHECK(cosine_lr(100, with_floor) == doctest::Approx(1e-5).epsilon(1e-15));
  CHECK_THROWS_AS(cosine_lr(-1, s), UsageError);
  CHECK_THROWS_AS(cosine_lr(1001, s), UsageError);
  LrSchedule bad{0.0, 0.0, 10};
  CHECK_THROWS_AS(cosine_lr(0, bad), ConfigError);
}

TEST_CASE("transformer block: residual identity with zero projections") {
  Tape<double> tape;
  const int64_t d = 8, n = 5;
  Rng rng(4);
  Tensor<double> xv({n, d});
  for (auto& v : xv.values) v = rng.normal();
  auto x = tape.leaf(xv, true, "x");
  auto zeros_dd = [&](const char* name) { return tape.leaf(Tensor<double>({d, d}), false, name); };
  auto zeros_d = [&](const char* name) { return tape.leaf(Tensor<double>({d}), false, name); };
  Tensor<double> ones_t({d});
  std::fill(ones_t.values.begin(), ones_t.values.end(), 1.0);
  BlockIds blk{tape.leaf(ones_t, false, "g1"), zeros_d("b1"),
               zeros_dd("wq"), zeros_d("bq"), zeros_dd("wk"), zeros_d("bk"),
               zeros_dd("wv"), zeros_d("bv"), zeros_dd("wo"), zeros_d("bo"),
               tape.leaf(ones_t, false, "g2"), zeros_d("b2"),
               tape.leaf(Tensor<double>({d, 4 * d}), false, "w1"), tape.leaf(Tensor<double>({4 * d}), false, "mb1"),
               tape.leaf(Tensor<double>({4 * d, d}), false, "w2"), tape.leaf(Tensor<double>({d}), false, "mb2")};
  auto out = transformer_block(tape, x, blk, 2, 1e-5);
  const auto& y = tape.value(out).values;
  for (size_t i = 0; i < y.size(); ++i) CHECK(y[i] == xv.values[i]);
}

namespace {

// Random small block with all parameters bound as constants.
struct RandomBlock {
  std::vector<Tensor<double>> tensors;
  BlockIds bind(Tape<double>& tape) {
    std::vector<Tape<double>::Id> ids;
    for (auto& t : tensors) ids.push_back(tape.leaf(t, false, "p"));
    return BlockIds{ids[0], ids[1], ids[2],  ids[3],  ids[4],  ids[5],  ids[6],  ids[7],
                    ids[8], ids[9], ids[10], ids[11], ids[12], ids[13], ids[14], ids[15]};
  }
  static RandomBlock make(int64_t d, uint64_t seed) {
    Rng rng(seed);
    auto normal = [&](std::vector<int64_t> shape, double scale) {
      Tensor<double> t(std::move(shape));
      for (auto& v : t.values) v = scale * rng.normal();
      return t;
    };
    auto ones = [&](std::vector<int64_t> shape) {
      Tensor<double> t(std::move(shape));
      std::fill(t.values.begin(), t.values.end(), 1.0);
      return t;
    };
    RandomBlock b;
    b.tensors.push_back(ones({d}));
    b.tensors.push_back(normal({d}, 0.1));
    for (int i = 0; i < 4; ++i) {
      b.tensors.push_back(normal({d, d}, 0.3));
      b.tensors.push_back(normal({d}, 0.1));
    }
    b.tensors.push_back(ones({d}));
    b.tensors.push_back(normal({d}, 0.1));
    b.tensors.push_back(normal({d, 4 * d}, 0.3));
    b.tensors.push_back(normal({4 * d}, 0.1));
    b.tensors.push_back(normal({4 * d, d}, 0.3));
    b.tensors.push_back(normal({d}, 0.1));
    return b;
  }
};

}  // namespace

TEST_CASE("transformer block: permutation equivariance over token rows") {
  const int64_t d = 8, n = 6;
  RandomBlock blk = RandomBlock::make(d, 21);
  Rng rng(22);
  Tensor<double> xv({n, d});
  for (auto& v : xv.values) v = rng.normal();
  std::vector<int> perm{3, 0, 5, 1, 4, 2};

  Tape<double> t1;
  auto out1 = t1.value(transformer_block(t1, t1.leaf(xv, false, "x"), blk.bind(t1), 2, 1e-5));

  Tensor<double> xp({n, d});
  for (int64_t r = 0; r < n; ++r)
    for (int64_t c = 0; c < d; ++c) xp.values[r * d + c] = xv.values[perm[r] * d + c];
  Tape<double> t2;
  auto out2 = t2.value(transformer_block(t2, t2.leaf(xp, false, "x"), blk.bind(t2), 2, 1e-5));

  for (int64_t r = 0; r < n; ++r)
    for (int64_t c = 0; c < d; ++c)
      CHECK(out2.values[r * d + c] ==
            doctest::Approx(out1.values[perm[r] * d + c]).epsilon(1e-12));
}

TEST_CASE("gradcheck suite: every primitive within 1e-5, composites within 1e-4") {
  auto results = run_gradcheck_suite(1e-5);
  CHECK(results.size() >= 18);
  for (const auto& r : results) {
    INFO(r.name, " max_rel_err=", r.max_rel_err, " tol=", r.tolerance);
    CHECK(r.passed);
  }
}
