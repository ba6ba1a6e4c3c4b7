#include "csm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "csm/errors.hpp"

namespace csm {

double dice_score(std::span<const uint8_t> a, std::span<const uint8_t> b) {
  if (a.size() != b.size()) throw UsageError("dice_score: shape mismatch");
  int64_t inter = 0, ca = 0, cb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const bool va = a[i] != 0, vb = b[i] != 0;
    ca += va;
    cb += vb;
    inter += va && vb;
  }
  if (ca + cb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(ca + cb);
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw UsageError("auc: score/label count mismatch");
  int64_t positives = 0, negatives = 0;
  for (int l : labels) {
    if (l == 1) {
      ++positives;
    } else if (l == 0) {
      ++negatives;
    } else {
      throw UsageError("auc: labels must be 0 or 1");
    }
  }
  if (positives == 0 || negatives == 0)
    throw UsageError("auc: undefined, labels contain a single class");

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](size_t x, size_t y) { return scores[x] < scores[y]; });

  // Twice the win count so ties stay integral: 2 per strict win, 1 per tie.
  int64_t numerator2 = 0;
  int64_t neg_below = 0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    int64_t pos_here = 0, neg_here = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] == 1) {
        ++pos_here;
      } else {
        ++neg_here;
      }
      ++j;
    }
    numerator2 += 2 * pos_here * neg_below + pos_here * neg_here;
    neg_below += neg_here;
    i = j;
  }
  return static_cast<double>(numerator2) / (2.0 * static_cast<double>(positives) *
                                            static_cast<double>(negatives));
}

double mean_baseline_mse(const std::vector<TokenGrid>& subjects,
                         const std::vector<MaskPlan>& plans, const MaskConfig& config) {
  if (subjects.empty()) throw UsageError("mean_baseline_mse: empty dataset");
  if (subjects.size() != plans.size())
    throw UsageError("mean_baseline_mse: subject/plan count mismatch");
  double sq_err = 0.0;
  int64_t count = 0;
  for (size_t si = 0; si < subjects.size(); ++si) {
    const TokenGrid& g = subjects[si];
    const MaskPlan& plan = plans[si];
    if (plan.series_count != g.series_count() ||
        plan.tokens_per_series != static_cast<int>(g.tokens_per_series()))
      throw UsageError("mean_baseline_mse: plan does not match subject");
    const int64_t pv = g.patch_volume();

    // Per-series visible means plus the pooled fallback.
    std::vector<double> series_mean(static_cast<size_t>(g.series_count()), 0.0);
    std::vector<int64_t> series_n(static_cast<size_t>(g.series_count()), 0);
    double all_sum = 0.0;
    int64_t all_n = 0;
    for (int j = 0; j < g.series_count(); ++j) {
      if (plan.is_absent(j) || plan.is_fully_masked(j)) continue;
      double s = 0.0;
      const auto& tok = g.tokens[static_cast<size_t>(j)];
      for (int i : plan.unmasked(j)) {
        const float* row = tok.values.data() + static_cast<int64_t>(i) * pv;
        for (int64_t c = 0; c < pv; ++c) s += row[c];
      }
      const int64_t n = static_cast<int64_t>(plan.unmasked(j).size()) * pv;
      series_mean[static_cast<size_t>(j)] = n > 0 ? s / static_cast<double>(n) : 0.0;
      series_n[static_cast<size_t>(j)] = n;
      all_sum += s;
      all_n += n;
    }
    const double fallback = all_n > 0 ? all_sum / static_cast<double>(all_n) : 0.0;

    for (int j = 0; j < g.series_count(); ++j) {
      if (!plan.loss_eligible(j, config)) continue;
      const double pred =
          series_n[static_cast<size_t>(j)] > 0 ? series_mean[static_cast<size_t>(j)] : fallback;
      const auto& tok = g.tokens[static_cast<size_t>(j)];
      for (int i : plan.masked[static_cast<size_t>(j)]) {
        const float* row = tok.values.data() + static_cast<int64_t>(i) * pv;
        for (int64_t c = 0; c < pv; ++c) {
          const double d = static_cast<double>(row[c]) - pred;
          sq_err += d * d;
        }
        count += pv;
      }
    }
  }
  if (count == 0) throw ConfigError("mean_baseline_mse: empty eligible set");
  return sq_err / static_cast<double>(count);
}

}  // namespace csm
