#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "csm/errors.hpp"
#include "csm/tensor.hpp"

namespace csm {

// Named trainable tensor with its gradient accumulator.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor<T>::zeros_like(value)) {}

  void zero_grad() { std::fill(grad.values.begin(), grad.values.end(), T(0)); }
};

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  int64_t t = 0;

  template <typename P>
  static AdamState init(const std::vector<P*>& params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const auto* p : params) {
      s.m.push_back(Tensor<T>::zeros_like(p->value));
      s.v.push_back(Tensor<T>::zeros_like(p->value));
    }
    return s;
  }
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  bool coupled_weight_decay = false;  // true: decay enters the gradient (L2)
};

// Bias-corrected Adam. Weight decay is decoupled by default (the decay term
// scales the parameter directly and never enters the moment accumulators);
// the coupled flag folds it into the gradient instead.
template <typename T>
void adam_step(const std::vector<Parameter<T>*>& params, AdamState<T>& state, double lr,
               const AdamConfig& cfg = {}) {
  if (lr < 0) throw UsageError("adam_step: negative learning rate");
  if (params.size() != state.m.size())
    throw UsageError("adam_step: state/parameter count mismatch");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Parameter<T>& p = *params[pi];
    Tensor<T>&m = state.m[pi], &v = state.v[pi];
    if (!p.value.same_shape(m) || !p.value.same_shape(p.grad))
      throw UsageError("adam_step: shape mismatch for " + p.name);
    for (size_t i = 0; i < p.value.values.size(); ++i) {
      double g = static_cast<double>(p.grad.values[i]);
      if (cfg.coupled_weight_decay)
        g += cfg.weight_decay * static_cast<double>(p.value.values[i]);
      const double m_new = cfg.beta1 * static_cast<double>(m.values[i]) + (1.0 - cfg.beta1) * g;
      const double v_new = cfg.beta2 * static_cast<double>(v.values[i]) + (1.0 - cfg.beta2) * g * g;
      m.values[i] = static_cast<T>(m_new);
      v.values[i] = static_cast<T>(v_new);
      const double m_hat = m_new / bc1;
      const double v_hat = v_new / bc2;
      double x = static_cast<double>(p.value.values[i]);
      x -= lr * (m_hat / (std::sqrt(v_hat) + cfg.eps));
      if (!cfg.coupled_weight_decay)
        x -= lr * cfg.weight_decay * static_cast<double>(p.value.values[i]);
      p.value.values[i] = static_cast<T>(x);
    }
  }
}

struct LrSchedule {
  double base_lr = 1e-3;
  double min_lr = 0.0;
  int64_t total_steps = 1;

  void validate() const {
    if (!(base_lr > 0)) throw ConfigError("lr schedule: base_lr must be positive");
    if (min_lr < 0 || min_lr > base_lr)
      throw ConfigError("lr schedule: min_lr must lie in [0, base_lr]");
    if (total_steps < 1) throw ConfigError("lr schedule: total_steps must be positive");
  }
};

inline double cosine_lr(int64_t step, const LrSchedule& s) {
  s.validate();
  if (step < 0 || step > s.total_steps)
    throw UsageError("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                     std::to_string(s.total_steps) + "]");
  const double pi = 3.14159265358979323846;
  const double frac = static_cast<double>(step) / static_cast<double>(s.total_steps);
  return s.min_lr + 0.5 * (s.base_lr - s.min_lr) * (1.0 + std::cos(pi * frac));
}

}  // namespace csm
