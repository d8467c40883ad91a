#include "gvqa/tensor.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace gvqa {

Tensor::Tensor(int r, int c, std::vector<double> data) : rows(r), cols(c), v(std::move(data)) {
  if (v.size() != static_cast<size_t>(r) * c) {
    throw std::invalid_argument("tensor data length " + std::to_string(v.size()) +
                                " does not match shape " + shape_str());
  }
}

Tensor::Tensor(std::initializer_list<std::initializer_list<double>> m) {
  rows = static_cast<int>(m.size());
  cols = rows > 0 ? static_cast<int>(m.begin()->size()) : 0;
  v.reserve(static_cast<size_t>(rows) * cols);
  for (const auto& r : m) {
    if (static_cast<int>(r.size()) != cols) {
      throw std::invalid_argument("ragged initializer for tensor");
    }
    v.insert(v.end(), r.begin(), r.end());
  }
}

Tensor Tensor::full(int r, int c, double x) {
  Tensor t(r, c);
  t.fill(x);
  return t;
}

Tensor Tensor::identity(int n) {
  Tensor t(n, n);
  for (int i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

Tensor Tensor::scalar(double x) {
  Tensor t(1, 1);
  t.v[0] = x;
  return t;
}

Tensor Tensor::row(const std::vector<double>& data) {
  return Tensor(1, static_cast<int>(data.size()), data);
}

bool Tensor::all_finite() const {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void Tensor::fill(double x) {
  for (double& e : v) e = x;
}

std::string Tensor::shape_str() const {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

bool operator==(const Tensor& a, const Tensor& b) {
  return a.rows == b.rows && a.cols == b.cols && a.v == b.v;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("max_abs_diff shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
  double m = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::fabs(a.v[i] - b.v[i]));
  return m;
}

}  // namespace gvqa
