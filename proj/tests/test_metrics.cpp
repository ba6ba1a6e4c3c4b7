#include <cmath>

#include "doctest.h"

#include "csm/metrics.hpp"
#include "csm/rng.hpp"
#include "csm/taskloss.hpp"

using namespace csm;

namespace {

double brute_force_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  int64_t numerator2 = 0, pos = 0, neg = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == 1) {
      ++pos;
    } else {
      ++neg;
    }
  }
  for (size_t p = 0; p < scores.size(); ++p) {
    if (labels[p] != 1) continue;
    for (size_t n = 0; n < scores.size(); ++n) {
      if (labels[n] != 0) continue;
      if (scores[p] > scores[n]) {
        numerator2 += 2;
      } else if (scores[p] == scores[n]) {
        numerator2 += 1;
      }
    }
  }
  return static_cast<double>(numerator2) / (2.0 * static_cast<double>(pos) *
                                            static_cast<double>(neg));
}

}  // namespace

TEST_CASE("dice_score: documented values") {
  std::vector<uint8_t> a{1, 1, 1, 1, 0, 0, 0, 0, 0, 0};
  CHECK(dice_score(a, a) == 1.0);
  std::vector<uint8_t> b{0, 0, 0, 0, 1, 1, 0, 0, 0, 0};
  CHECK(dice_score(a, b) == 0.0);
  // |a|=4, |b|=6, intersection 3 -> 2*3/(4+6)
  std::vector<uint8_t> c{1, 1, 1, 0, 1, 1, 1, 0, 0, 0};
  CHECK(dice_score(a, c) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(dice_score(a, c) == dice_score(c, a));
  std::vector<uint8_t> empty1(10, 0), empty2(10, 0);
  CHECK(dice_score(empty1, empty2) == 1.0);
  std::vector<uint8_t> shorter(5, 0);
  CHECK_THROWS_AS(dice_score(a, shorter), UsageError);
}

TEST_CASE("auc: documented values") {
  std::vector<double> sep{0.9, 0.8, 0.1, 0.2};
  std::vector<int> lsep{1, 1, 0, 0};
  CHECK(auc(sep, lsep) == 1.0);

  std::vector<double> tie{0.5, 0.5};
  std::vector<int> ltie{1, 0};
  CHECK(auc(tie, ltie) == 0.5);

  std::vector<double> s3{0.2, 0.7, 0.4};
  std::vector<int> l3{1, 0, 1};
  CHECK(auc(s3, l3) == 0.0);

  std::vector<int> single{1, 1, 1};
  CHECK_THROWS_AS(auc(s3, single), UsageError);
}

TEST_CASE("auc: agrees exactly with pair-counting brute force on 100 instances") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_below(49));
    std::vector<double> scores;
    std::vector<int> labels;
    int pos = 0;
    for (int i = 0; i < n; ++i) {
      // Coarse quantization forces plenty of ties.
      scores.push_back(std::floor(rng.uniform(0.0, 8.0)) / 8.0);
      labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
      pos += labels.back();
    }
    if (pos == 0) labels[0] = 1;
    if (pos == n) labels[0] = 0;
    CHECK(auc(scores, labels) == brute_force_auc(scores, labels));
  }
}

TEST_CASE("auc: invariant under strictly increasing transforms") {
  Rng rng(55);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < 30; ++i) {
      scores.push_back(rng.uniform(-2.0, 2.0));
      labels.push_back(rng.bernoulli(0.4) ? 1 : 0);
    }
    labels[0] = 1;
    labels[1] = 0;
    const double base = auc(scores, labels);
    std::vector<double> mapped = scores;
    for (auto& s : mapped) s = std::exp(0.7 * s) + 3.0;
    CHECK(auc(mapped, labels) == base);
    for (auto& s : mapped) s = std::atan(s);
    CHECK(auc(mapped, labels) == base);
  }
}

TEST_CASE("cross_entropy: documented values and monotonicity") {
  std::vector<double> equal{0.3, 0.3};
  CHECK(cross_entropy(equal, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  std::vector<double> wide{10.0, -10.0};
  CHECK(cross_entropy(wide, 0) == doctest::Approx(2.0611536181902037e-9).epsilon(1e-6));

  std::vector<double> pair{0.0, 0.0};
  double prev = cross_entropy(pair, 0);
  for (double z = 0.5; z < 5.0; z += 0.5) {
    pair[0] = z;
    const double cur = cross_entropy(pair, 0);
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("dice_loss: documented values") {
  std::vector<double> t{1, 0, 1, 1, 0, 0, 1, 0};
  CHECK(dice_loss(t, t) == doctest::Approx(0.0).epsilon(1e-6));
  std::vector<double> inv(t.size());
  for (size_t i = 0; i < t.size(); ++i) inv[i] = 1.0 - t[i];
  CHECK(dice_loss(inv, t) == doctest::Approx(1.0).epsilon(1e-6));

  std::vector<double> half(8, 0.5);
  std::vector<double> tgt{1, 1, 1, 1, 0, 0, 0, 0};
  // 1 - (2*2 + eps) / (4 + 4 + eps)
  CHECK(dice_loss(half, tgt) == doctest::Approx(0.5).epsilon(1e-6));
  CHECK_THROWS_AS(dice_loss(half, t.size() == 8 ? std::vector<double>(3) : t), UsageError);
}

TEST_CASE("mean_baseline_mse: constant series floor is zero") {
  MultiSeriesVolume v = MultiSeriesVolume::zeros("c", {8, 8, 8}, 2);
  std::fill(v.series[0].begin(), v.series[0].end(), 4.0f);
  std::fill(v.series[1].begin(), v.series[1].end(), -1.0f);
  TokenGrid g = patchify(v, 4);
  MaskConfig cfg;
  cfg.intra_ratio = 0.5;
  cfg.inter_prob = 0.0;
  Rng rng(3);
  MaskPlan plan = sample_mask_plan(2, static_cast<int>(g.tokens_per_series()), cfg, rng);
  CHECK(mean_baseline_mse({g}, {plan}, cfg) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("mean_baseline_mse: near 1.0 on normalized noise") {
  Rng rng(8);
  std::vector<TokenGrid> grids;
  std::vector<MaskPlan> plans;
  MaskConfig cfg;
  cfg.intra_ratio = 0.5;
  cfg.inter_prob = 0.0;
  for (int s = 0; s < 10; ++s) {
    MultiSeriesVolume v = MultiSeriesVolume::zeros("n", {16, 16, 16}, 2);
    for (auto& series : v.series)
      for (auto& x : series) x = static_cast<float>(rng.normal());
    normalize_per_series(v);
    TokenGrid g = patchify(v, 4);
    Rng prng(100 + static_cast<uint64_t>(s));
    plans.push_back(sample_mask_plan(2, static_cast<int>(g.tokens_per_series()), cfg, prng));
    grids.push_back(std::move(g));
  }
  CHECK(mean_baseline_mse(grids, plans, cfg) == doctest::Approx(1.0).epsilon(0.05));
}
