#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace gvqa {

// Dense row-major matrix of 64-bit floats. Scalars are 1x1, vectors 1xN.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}
  Tensor(int r, int c, std::vector<double> data);
  Tensor(std::initializer_list<std::initializer_list<double>> m);

  static Tensor zeros(int r, int c) { return Tensor(r, c); }
  static Tensor full(int r, int c, double x);
  static Tensor identity(int n);
  static Tensor scalar(double x);
  static Tensor row(const std::vector<double>& data);

  double& operator()(int i, int j) { return v[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return v[static_cast<size_t>(i) * cols + j]; }

  size_t size() const { return v.size(); }
  bool empty() const { return v.empty(); }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
  bool all_finite() const;
  void fill(double x);
  std::string shape_str() const;
};

bool operator==(const Tensor& a, const Tensor& b);

// max |a-b| over all entries; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace gvqa
