#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gvqa/autodiff.hpp"

namespace gvqa::ad {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_coordinate;  // "param#k[i]" of the worst entry
};

// Central-difference check of d(f)/d(params) against one backward pass.
// f must rebuild its graph from the current parameter values on every call
// and be deterministic; two disagreeing evaluations raise an error.
// Relative error uses denominator max(|analytic|, |numeric|, 1e-8).
GradCheckReport finite_difference_check(const std::function<Value()>& f,
                                        const std::vector<Value>& params, double step);

// Same check with a per-coordinate minimum over several steps. Coordinates
// with zero analytic gradient need a wide step (the difference is pure
// roundoff), coordinates with steep third derivatives need a narrow one; a
// wrong gradient fails at every step, so the minimum is still a valid oracle.
GradCheckReport finite_difference_check_multi(const std::function<Value()>& f,
                                              const std::vector<Value>& params,
                                              const std::vector<double>& steps);

}  // namespace gvqa::ad
