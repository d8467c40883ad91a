#include "gvqa/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace gvqa::ad {

void Adam::step(ParamStore& params) {
  for (const auto& p : params.items()) {
    if (!p.value.has_grad()) {
      throw std::runtime_error("optimizer step with missing gradient for parameter " + p.name);
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& p : params.items()) {
    const Tensor& g = p.value.grad();
    auto it = moments_.find(p.name);
    if (it == moments_.end()) {
      it = moments_.emplace(p.name, std::make_pair(Tensor(g.rows, g.cols), Tensor(g.rows, g.cols))).first;
    }
    Tensor& m = it->second.first;
    Tensor& v = it->second.second;
    if (!m.same_shape(g)) {
      throw std::runtime_error("optimizer state shape mismatch for parameter " + p.name);
    }
    Tensor x = p.value.val();
    for (size_t i = 0; i < x.v.size(); ++i) {
      m.v[i] = cfg_.beta1 * m.v[i] + (1.0 - cfg_.beta1) * g.v[i];
      v.v[i] = cfg_.beta2 * v.v[i] + (1.0 - cfg_.beta2) * g.v[i] * g.v[i];
      const double mhat = m.v[i] / bc1;
      const double vhat = v.v[i] / bc2;
      x.v[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    p.value.assign(x);
    p.value.zero_grad();
  }
}

}  // namespace gvqa::ad
