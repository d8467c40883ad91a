#pragma once

#include <string>
#include <unordered_map>
#include <utility>

#include "gvqa/params.hpp"
#include "gvqa/tensor.hpp"

namespace gvqa::ad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  // One update over every parameter in the store; zeroes gradients after.
  // Throws if any parameter has no materialized gradient.
  void step(ParamStore& params);

  long step_count() const { return t_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::unordered_map<std::string, std::pair<Tensor, Tensor>> moments_;
};

}  // namespace gvqa::ad
