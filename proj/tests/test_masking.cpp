#include <map>
#include <set>

#include "doctest.h"

#include "csm/masking.hpp"

using namespace csm;

TEST_CASE("intra mask: cardinality and edge ratios") {
  Rng rng(1);
  CHECK(sample_intra_mask(16, 0.0, rng).empty());
  auto m = sample_intra_mask(216, 0.875, rng);
  CHECK(m.size() == 189);  // floor(0.875 * 216)
  CHECK(std::is_sorted(m.begin(), m.end()));
  CHECK(m.front() >= 0);
  CHECK(m.back() < 216);
  CHECK_THROWS_AS(sample_intra_mask(16, 1.0, rng), ConfigError);
}

TEST_CASE("intra mask: per-index marginal frequency is uniform") {
  Rng rng(7);
  const int n = 16, draws = 10000;
  std::vector<int> hits(n, 0);
  for (int d = 0; d < draws; ++d)
    for (int idx : sample_intra_mask(n, 0.5, rng)) hits[static_cast<size_t>(idx)]++;
  for (int i = 0; i < n; ++i) {
    const double freq = static_cast<double>(hits[static_cast<size_t>(i)]) / draws;
    CHECK(freq == doctest::Approx(0.5).epsilon(0.04));  // 0.5 +- 0.02
  }
}

TEST_CASE("inter mask: forced support at s=2 and k range at s=4") {
  Rng rng(3);
  std::map<int, int> counts;
  for (int d = 0; d < 4000; ++d) {
    auto s = sample_inter_mask(2, rng);
    REQUIRE(s.size() == 1);
    counts[s[0]]++;
  }
  CHECK(counts[0] + counts[1] == 4000);
  CHECK(static_cast<double>(counts[0]) / 4000.0 == doctest::Approx(0.5).epsilon(0.06));

  for (int d = 0; d < 200; ++d) {
    auto s = sample_inter_mask(4, rng);
    CHECK(s.size() >= 1);
    CHECK(s.size() <= 3);
  }
  CHECK_THROWS_AS(sample_inter_mask(1, rng), ConfigError);
}

TEST_CASE("inter mask: chi-square uniformity of k at s=3 and s=4") {
  for (int s : {3, 4}) {
    Rng rng(100 + static_cast<uint64_t>(s));
    const int draws = 30000;
    std::vector<int64_t> counts(static_cast<size_t>(s), 0);
    for (int d = 0; d < draws; ++d) counts[sample_inter_mask(s, rng).size() - 1]++;
    const double expected = static_cast<double>(draws) / (s - 1);
    double chi2 = 0.0;
    for (int k = 1; k <= s - 1; ++k) {
      const double diff = static_cast<double>(counts[static_cast<size_t>(k - 1)]) - expected;
      chi2 += diff * diff / expected;
    }
    // dof = s-2; p > 0.01 thresholds: 6.635 (1 dof), 9.210 (2 dof)
    const double threshold = s == 3 ? 6.635 : 9.210;
    INFO("s=", s, " chi2=", chi2);
    CHECK(chi2 < threshold);
  }
}

TEST_CASE("mask plan: intra-only composition") {
  MaskConfig cfg;
  cfg.intra_ratio = 0.5;
  cfg.inter_prob = 0.0;
  Rng rng(5);
  MaskPlan plan = sample_mask_plan(3, 8, cfg, rng);
  CHECK(plan.k() == 0);
  for (int j = 0; j < 3; ++j) {
    CHECK(plan.masked[static_cast<size_t>(j)].size() == 4);
    CHECK(plan.unmasked(j).size() == 4);
  }
  CHECK(plan.masked[0] != plan.masked[1]);  // independent draws, overwhelmingly
}

TEST_CASE("mask plan: forced inter-series masking") {
  MaskConfig cfg;
  cfg.intra_ratio = 0.5;
  cfg.inter_prob = 1.0;
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    MaskPlan plan = sample_mask_plan(3, 8, cfg, rng);
    CHECK(plan.k() >= 1);
    CHECK(plan.k() <= 2);
    for (int j = 0; j < 3; ++j) {
      const size_t expect = plan.is_fully_masked(j) ? 8 : 4;
      CHECK(plan.masked[static_cast<size_t>(j)].size() == expect);
    }
  }
}

TEST_CASE("mask plan: same-position ablation copies one mask") {
  MaskConfig cfg;
  cfg.intra_ratio = 0.875;
  cfg.inter_prob = 0.5;
  cfg.same_position = true;
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    MaskPlan plan = sample_mask_plan(4, 16, cfg, rng);
    const std::vector<int>* ref = nullptr;
    for (int j = 0; j < 4; ++j) {
      if (plan.is_fully_masked(j)) continue;
      if (!ref) {
        ref = &plan.masked[static_cast<size_t>(j)];
      } else {
        CHECK(plan.masked[static_cast<size_t>(j)] == *ref);
      }
    }
  }
}

TEST_CASE("mask plan: absent series are hidden and never loss-eligible") {
  MaskConfig cfg;
  cfg.intra_ratio = 0.5;
  cfg.inter_prob = 1.0;
  std::vector<uint8_t> presence{1, 0, 1};
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    MaskPlan plan = sample_mask_plan(3, 8, cfg, rng, &presence);
    CHECK(plan.is_absent(1));
    CHECK(plan.masked[1].size() == 8);
    CHECK_FALSE(plan.loss_eligible(1, cfg));
    CHECK(plan.k() <= 1);  // only one of the two present series may be hidden
    int visible = 0;
    for (int j = 0; j < 3; ++j)
      if (plan.masked[static_cast<size_t>(j)].size() < 8) ++visible;
    CHECK(visible >= 1);
  }
  std::vector<uint8_t> none{0, 0, 0};
  CHECK_THROWS_AS(sample_mask_plan(3, 8, cfg, rng, &none), UsageError);
}

TEST_CASE("mask plan: series-mask variants control loss eligibility") {
  MaskConfig cfg;
  cfg.intra_ratio = 0.5;
  cfg.inter_prob = 1.0;
  cfg.reconstruct_masked_series = false;  // mask without reconstruction
  Rng rng(13);
  MaskPlan plan = sample_mask_plan(2, 8, cfg, rng);
  REQUIRE(plan.k() == 1);
  const int hidden = plan.fully_masked[0];
  CHECK_FALSE(plan.loss_eligible(hidden, cfg));
  CHECK(plan.loss_eligible(1 - hidden, cfg));

  cfg.series_mask_enabled = false;
  MaskPlan intra_only = sample_mask_plan(2, 8, cfg, rng);
  CHECK(intra_only.k() == 0);
}

TEST_CASE("masked_voxel_fraction: exact arithmetic") {
  MaskConfig cfg;
  cfg.intra_ratio = 0.875;
  cfg.inter_prob = 0.0;
  Rng rng(15);
  MaskPlan plan = sample_mask_plan(2, 216, cfg, rng);
  CHECK(masked_voxel_fraction(plan) == 0.875);  // 189/216 exactly

  // One hidden series among four: (216 + 3*189) / 864
  MaskConfig inter = cfg;
  inter.inter_prob = 1.0;
  for (int trial = 0; trial < 50; ++trial) {
    Rng r2(1000 + static_cast<uint64_t>(trial));
    MaskPlan p2 = sample_mask_plan(4, 216, inter, r2);
    if (p2.k() == 1) {
      CHECK(masked_voxel_fraction(p2) == doctest::Approx(0.90625).epsilon(1e-12));
    }
    CHECK(masked_voxel_fraction(p2) < 1.0);
  }
}

TEST_CASE("mask plan: exact cardinalities across random configurations") {
  Rng meta(77);
  for (int trial = 0; trial < 500; ++trial) {
    const int s = 2 + static_cast<int>(meta.uniform_below(3));
    const int n = 4 + static_cast<int>(meta.uniform_below(60));
    MaskConfig cfg;
    cfg.intra_ratio = meta.uniform(0.0, 0.95);
    cfg.inter_prob = meta.uniform(0.0, 1.0);
    cfg.same_position = meta.bernoulli(0.3);
    cfg.series_mask_enabled = meta.bernoulli(0.8);
    Rng rng(meta.next_u64());
    MaskPlan plan = sample_mask_plan(s, n, cfg, rng);
    const int expect_intra = static_cast<int>(std::floor(cfg.intra_ratio * n));
    CHECK(plan.k() <= s - 1);
    for (int j = 0; j < s; ++j) {
      const auto& m = plan.masked[static_cast<size_t>(j)];
      if (plan.is_fully_masked(j)) {
        CHECK(static_cast<int>(m.size()) == n);
      } else {
        CHECK(static_cast<int>(m.size()) == expect_intra);
      }
      auto u = plan.unmasked(j);
      CHECK(m.size() + u.size() == static_cast<size_t>(n));
      std::set<int> both(m.begin(), m.end());
      both.insert(u.begin(), u.end());
      CHECK(both.size() == static_cast<size_t>(n));  // disjoint union covers all
    }
  }
}

TEST_CASE("mask plan: independent masks differ across series in 1000 draws") {
  MaskConfig cfg;
  cfg.intra_ratio = 0.875;
  cfg.inter_prob = 0.0;
  for (int draw = 0; draw < 1000; ++draw) {
    Rng rng(40000 + static_cast<uint64_t>(draw));
    MaskPlan plan = sample_mask_plan(2, 216, cfg, rng);
    CHECK(plan.masked[0] != plan.masked[1]);
  }
}

TEST_CASE("mask plan: JSON round-trip is lossless") {
  MaskConfig cfg;
  cfg.intra_ratio = 0.7;
  cfg.inter_prob = 1.0;
  std::vector<uint8_t> presence{1, 1, 0, 1};
  Rng rng(123);
  MaskPlan plan = sample_mask_plan(4, 12, cfg, rng, &presence);
  MaskPlan back = MaskPlan::from_json_string(plan.to_json_string());
  CHECK(back.series_count == plan.series_count);
  CHECK(back.tokens_per_series == plan.tokens_per_series);
  CHECK(back.masked == plan.masked);
  CHECK(back.fully_masked == plan.fully_masked);
  CHECK(back.absent == plan.absent);
  CHECK(back.to_json_string() == plan.to_json_string());
}
