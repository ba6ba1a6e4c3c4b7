#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "csm/errors.hpp"
#include "csm/optim.hpp"

namespace csm {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  int64_t coordinates_checked = 0;
};

// Compares the analytic gradient against central finite differences,
// coordinate by coordinate. `eval(false)` returns the objective at the
// current parameter values; `eval(true)` additionally accumulates analytic
// gradients into each parameter's grad buffer. The relative error uses the
// floored denominator max(|analytic|, |numeric|, 1e-8).
template <typename T>
GradCheckReport grad_check(const std::vector<Parameter<T>*>& params,
                           const std::function<double(bool)>& eval, double eps) {
  if (!(eps > 0)) throw UsageError("grad_check: eps must be positive");
  const double f0 = eval(false);
  const double f1 = eval(false);
  if (f0 != f1) throw UsageError("grad_check: objective is not deterministic");

  for (auto* p : params) p->zero_grad();
  eval(true);

  GradCheckReport report;
  for (auto* p : params) {
    for (size_t i = 0; i < p->value.values.size(); ++i) {
      const T saved = p->value.values[i];
      p->value.values[i] = static_cast<T>(static_cast<double>(saved) + eps);
      const double f_plus = eval(false);
      p->value.values[i] = static_cast<T>(static_cast<double>(saved) - eps);
      const double f_minus = eval(false);
      p->value.values[i] = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * eps);
      const double analytic = static_cast<double>(p->grad.values[i]);
      const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
      const double rel = std::fabs(analytic - numeric) / denom;
      ++report.coordinates_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

}  // namespace csm
