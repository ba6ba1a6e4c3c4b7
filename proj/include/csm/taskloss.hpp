#pragma once

#include <span>

namespace csm {

// -log softmax(logits)[label] for a binary pair of logits.
double cross_entropy(std::span<const double> logits, int label);

// Soft Dice loss over a probability map against a binary target:
// 1 - (2*sum(p*t) + eps) / (sum(p) + sum(t) + eps).
double dice_loss(std::span<const double> prediction, std::span<const double> target,
                 double eps = 1e-6);

}  // namespace csm
