#pragma once

#include <string>
#include <vector>

namespace csm {

struct GradSuiteEntry {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

// Finite-difference verification of every tape primitive (tolerance 1e-5)
// and of the composed objectives on a tiny f64 model (tolerance 1e-4).
std::vector<GradSuiteEntry> run_gradcheck_suite(double eps);

}  // namespace csm
