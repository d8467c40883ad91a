#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gvqa/tensor.hpp"

namespace gvqa::ad {

namespace detail {
struct Node;
using BackwardFn = std::function<void(Node&)>;
}

// Handle to one tensor in a reverse-mode computation graph. Copying a Value
// copies the handle, not the tensor. Nodes are immutable after construction
// except for gradient accumulation.
class Value {
 public:
  Value() = default;

  static Value constant(Tensor t);
  static Value parameter(Tensor t);

  bool defined() const { return static_cast<bool>(n_); }
  const Tensor& val() const;
  // gradient accumulated by backward(); zeros of the value's shape if no
  // backward pass has touched this node yet
  Tensor grad() const;
  // true once a backward pass or zero_grad() has materialized the gradient
  bool has_grad() const;
  bool requires_grad() const;
  int rows() const { return val().rows; }
  int cols() const { return val().cols; }
  double item() const;
  void zero_grad();
  // overwrites the stored tensor in place (used by the optimizer and the
  // finite-difference probe); shape must not change
  void assign(const Tensor& t);

  detail::Node* node() const { return n_.get(); }

 private:
  friend Value make_op(Tensor out, std::vector<Value> parents, detail::BackwardFn fn);
  explicit Value(std::shared_ptr<detail::Node> n) : n_(std::move(n)) {}
  std::shared_ptr<detail::Node> n_;
};

// --- graph construction ops -------------------------------------------------

Value matmul(const Value& a, const Value& b);
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
// broadcast a 1xN row over every row of a MxN matrix
Value add_rowvec(const Value& x, const Value& b);
Value scale(const Value& x, double s);
Value elementwise_mul(const Value& a, const Value& b);
Value transpose(const Value& x);
Value softmax_rows(const Value& x);
// rows with sum < epsilon come back all-zero instead of dividing by ~0
Value row_normalize(const Value& x, double epsilon);
Value layer_norm_rows(const Value& x, const Value& gamma, const Value& beta);
Value relu(const Value& x);
Value gelu(const Value& x);
Value concat_rows(const std::vector<Value>& parts);
Value concat_cols(const std::vector<Value>& parts);
Value take_row(const Value& x, int i);
Value mean_pool_rows(const Value& x);
Value sum_all(const Value& x);
Value embedding_rows(const Value& table, const std::vector<int>& ids);
Value dot(const Value& a, const Value& b);             // 1xN . 1xN -> 1x1
Value logsumexp_row(const Value& x);                   // 1xN -> 1x1
Value pick(const Value& x, int i);                     // 1xN -> 1x1
Value l2_distance(const Value& a, const Value& b);     // 1xN, 1xN -> 1x1
Value cross_entropy(const Value& logits, int answer_index);

// Accumulates d(loss)/d(node) into every reachable node with requires_grad.
// loss must be 1x1. Calling twice without zeroing doubles the gradients.
void backward(const Value& loss);

}  // namespace gvqa::ad
