#include "gvqa/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace gvqa::ad {

GradCheckReport finite_difference_check_multi(const std::function<Value()>& f,
                                              const std::vector<Value>& params,
                                              const std::vector<double>& steps) {
  if (steps.empty()) throw std::invalid_argument("finite_difference_check needs at least one step");
  const double base1 = f().item();
  const double base2 = f().item();
  if (base1 != base2) {
    throw std::runtime_error("finite_difference_check: f is not deterministic (" +
                             std::to_string(base1) + " vs " + std::to_string(base2) + ")");
  }

  for (Value p : params) p.zero_grad();
  Value loss = f();
  backward(loss);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (const Value& p : params) analytic.push_back(p.grad());

  GradCheckReport report;
  for (size_t k = 0; k < params.size(); ++k) {
    Value p = params[k];
    Tensor x = p.val();
    for (size_t i = 0; i < x.v.size(); ++i) {
      const double orig = x.v[i];
      const double a = analytic[k].v[i];
      double best = -1.0;
      for (double step : steps) {
        x.v[i] = orig + step;
        p.assign(x);
        const double fp = f().item();
        x.v[i] = orig - step;
        p.assign(x);
        const double fm = f().item();
        x.v[i] = orig;
        p.assign(x);
        const double numeric = (fp - fm) / (2.0 * step);
        const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
        const double rel = std::fabs(a - numeric) / denom;
        if (best < 0.0 || rel < best) best = rel;
      }
      if (best > report.max_rel_error) {
        report.max_rel_error = best;
        report.worst_coordinate = "param#" + std::to_string(k) + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

GradCheckReport finite_difference_check(const std::function<Value()>& f,
                                        const std::vector<Value>& params, double step) {
  return finite_difference_check_multi(f, params, {step});
}

}  // namespace gvqa::ad
