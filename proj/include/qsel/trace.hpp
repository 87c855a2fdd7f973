#pragma once

#include <vector>

namespace qsel {

struct OptimizerTrace {
  std::vector<double> objective_history;  // initial value, then one entry per accepted step
  int iterations = 0;
  bool converged = false;
  double min_step_term = 0.0;  // monotonic sweeps: smallest accepted per-step increment term
};

}  // namespace qsel
