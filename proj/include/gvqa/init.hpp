#pragma once

#include <cmath>

#include "gvqa/rng.hpp"
#include "gvqa/tensor.hpp"

namespace gvqa {

inline Tensor xavier_uniform(Rng& rng, int rows, int cols) {
  const double limit = std::sqrt(6.0 / (rows + cols));
  Tensor t(rows, cols);
  for (double& e : t.v) e = rng.uniform(-limit, limit);
  return t;
}

inline Tensor normal_init(Rng& rng, int rows, int cols, double stddev) {
  Tensor t(rows, cols);
  for (double& e : t.v) e = rng.normal(0.0, stddev);
  return t;
}

}  // namespace gvqa
