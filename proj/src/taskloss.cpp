#include "csm/taskloss.hpp"

#include <algorithm>
#include <cmath>

#include "csm/errors.hpp"

namespace csm {

double cross_entropy(std::span<const double> logits, int label) {
  if (logits.size() != 2) throw UsageError("cross_entropy: expected two logits");
  if (label != 0 && label != 1) throw UsageError("cross_entropy: label must be 0 or 1");
  const double mx = std::max(logits[0], logits[1]);
  const double lse = mx + std::log(std::exp(logits[0] - mx) + std::exp(logits[1] - mx));
  return lse - logits[static_cast<size_t>(label)];
}

double dice_loss(std::span<const double> prediction, std::span<const double> target, double eps) {
  if (prediction.size() != target.size()) throw UsageError("dice_loss: shape mismatch");
  double inter = 0.0, total = 0.0;
  for (size_t i = 0; i < prediction.size(); ++i) {
    inter += prediction[i] * target[i];
    total += prediction[i] + target[i];
  }
  return 1.0 - (2.0 * inter + eps) / (total + eps);
}

}  // namespace csm
