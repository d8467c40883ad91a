#include "gvqa/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>
#include <utility>

namespace gvqa::ad {

namespace detail {

struct Node {
  Tensor value;
  Tensor grad;       // accumulated across backward passes
  Tensor pass_grad;  // scratch for the pass in flight
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;

  void ensure_grad() {
    if (grad.empty()) grad = Tensor(value.rows, value.cols);
  }
  void ensure_pass_grad() {
    if (pass_grad.empty()) pass_grad = Tensor(value.rows, value.cols);
  }
};

}  // namespace detail

using detail::Node;

Value Value::constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  return Value(std::move(n));
}

Value Value::parameter(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = true;
  return Value(std::move(n));
}

const Tensor& Value::val() const {
  if (!n_) throw std::logic_error("use of empty Value");
  return n_->value;
}

Tensor Value::grad() const {
  if (!n_) throw std::logic_error("use of empty Value");
  if (n_->grad.empty()) return Tensor(n_->value.rows, n_->value.cols);
  return n_->grad;
}

bool Value::has_grad() const { return n_ && !n_->grad.empty(); }

bool Value::requires_grad() const { return n_ && n_->requires_grad; }

double Value::item() const {
  const Tensor& t = val();
  if (t.rows != 1 || t.cols != 1) {
    throw std::invalid_argument("item() on non-scalar tensor " + t.shape_str());
  }
  return t.v[0];
}

void Value::zero_grad() {
  if (!n_) return;
  n_->ensure_grad();
  n_->grad.fill(0.0);
}

void Value::assign(const Tensor& t) {
  if (!n_) throw std::logic_error("assign to empty Value");
  if (!n_->value.same_shape(t)) {
    throw std::invalid_argument("assign shape mismatch " + n_->value.shape_str() + " vs " + t.shape_str());
  }
  n_->value = t;
}

Value make_op(Tensor out, std::vector<Value> parents, detail::BackwardFn fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(out);
  bool needs = false;
  for (const Value& p : parents) needs = needs || p.requires_grad();
  n->requires_grad = needs;
  if (needs) {
    n->parents.reserve(parents.size());
    for (Value& p : parents) n->parents.push_back(p.n_);
    n->backward = std::move(fn);
  }
  return Value(std::move(n));
}

// --- gemm kernels (accumulating) ---------------------------------------------

static void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c) {
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = &a.v[static_cast<size_t>(i) * a.cols];
    double* crow = &c.v[static_cast<size_t>(i) * c.cols];
    for (int k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = &b.v[static_cast<size_t>(k) * b.cols];
      for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
}

static void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c) {
  // c += a * b^T
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = &a.v[static_cast<size_t>(i) * a.cols];
    double* crow = &c.v[static_cast<size_t>(i) * c.cols];
    for (int j = 0; j < b.rows; ++j) {
      const double* brow = &b.v[static_cast<size_t>(j) * b.cols];
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
      crow[j] += acc;
    }
  }
}

static void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c) {
  // c += a^T * b
  for (int k = 0; k < a.rows; ++k) {
    const double* arow = &a.v[static_cast<size_t>(k) * a.cols];
    const double* brow = &b.v[static_cast<size_t>(k) * b.cols];
    for (int i = 0; i < a.cols; ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      double* crow = &c.v[static_cast<size_t>(i) * c.cols];
      for (int j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
    }
  }
}

// --- ops ----------------------------------------------------------------------

Value matmul(const Value& a, const Value& b) {
  const Tensor& ta = a.val();
  const Tensor& tb = b.val();
  if (ta.cols != tb.rows) {
    throw std::invalid_argument("matmul dimension mismatch " + ta.shape_str() + " x " + tb.shape_str());
  }
  Tensor out(ta.rows, tb.cols);
  gemm_nn(ta, tb, out);
  return make_op(std::move(out), {a, b}, [](Node& self) {
    Node* pa = self.parents[0].get();
    Node* pb = self.parents[1].get();
    if (pa->requires_grad) {
      pa->ensure_pass_grad();
      gemm_nt(self.pass_grad, pb->value, pa->pass_grad);
    }
    if (pb->requires_grad) {
      pb->ensure_pass_grad();
      gemm_tn(pa->value, self.pass_grad, pb->pass_grad);
    }
  });
}

static void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + " shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
}

Value add(const Value& a, const Value& b) {
  check_same_shape(a.val(), b.val(), "add");
  Tensor out = a.val();
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += b.val().v[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    for (int s = 0; s < 2; ++s) {
      Node* p = self.parents[s].get();
      if (!p->requires_grad) continue;
      p->ensure_pass_grad();
      for (size_t i = 0; i < p->pass_grad.v.size(); ++i) p->pass_grad.v[i] += self.pass_grad.v[i];
    }
  });
}

Value sub(const Value& a, const Value& b) {
  check_same_shape(a.val(), b.val(), "sub");
  Tensor out = a.val();
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] -= b.val().v[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    Node* pa = self.parents[0].get();
    Node* pb = self.parents[1].get();
    if (pa->requires_grad) {
      pa->ensure_pass_grad();
      for (size_t i = 0; i < pa->pass_grad.v.size(); ++i) pa->pass_grad.v[i] += self.pass_grad.v[i];
    }
    if (pb->requires_grad) {
      pb->ensure_pass_grad();
      for (size_t i = 0; i < pb->pass_grad.v.size(); ++i) pb->pass_grad.v[i] -= self.pass_grad.v[i];
    }
  });
}

Value add_rowvec(const Value& x, const Value& b) {
  const Tensor& tx = x.val();
  const Tensor& tb = b.val();
  if (tb.rows != 1 || tb.cols != tx.cols) {
    throw std::invalid_argument("add_rowvec expects 1x" + std::to_string(tx.cols) + " bias, got " + tb.shape_str());
  }
  Tensor out = tx;
  for (int i = 0; i < tx.rows; ++i)
    for (int j = 0; j < tx.cols; ++j) out(i, j) += tb.v[j];
  return make_op(std::move(out), {x, b}, [](Node& self) {
    Node* px = self.parents[0].get();
    Node* pb = self.parents[1].get();
    if (px->requires_grad) {
      px->ensure_pass_grad();
      for (size_t i = 0; i < px->pass_grad.v.size(); ++i) px->pass_grad.v[i] += self.pass_grad.v[i];
    }
    if (pb->requires_grad) {
      pb->ensure_pass_grad();
      for (int i = 0; i < self.pass_grad.rows; ++i)
        for (int j = 0; j < self.pass_grad.cols; ++j) pb->pass_grad.v[j] += self.pass_grad(i, j);
    }
  });
}

Value scale(const Value& x, double s) {
  Tensor out = x.val();
  for (double& e : out.v) e *= s;
  return make_op(std::move(out), {x}, [s](Node& self) {
    Node* p = self.parents[0].get();
    if (!p->requires_grad) return;
    p->ensure_pass_grad();
    for (size_t i = 0; i < p->pass_grad.v.size(); ++i) p->pass_grad.v[i] += s * self.pass_grad.v[i];
  });
}

Value elementwise_mul(const Value& a, const Value& b) {
  check_same_shape(a.val(), b.val(), "elementwise_mul");
  Tensor out = a.val();
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= b.val().v[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    Node* pa = self.parents[0].get();
    Node* pb = self.parents[1].get();
    if (pa->requires_grad) {
      pa->ensure_pass_grad();
      for (size_t i = 0; i < pa->pass_grad.v.size(); ++i)
        pa->pass_grad.v[i] += self.pass_grad.v[i] * pb->value.v[i];
    }
    if (pb->requires_grad) {
      pb->ensure_pass_grad();
      for (size_t i = 0; i < pb->pass_grad.v.size(); ++i)
        pb->pass_grad.v[i] += self.pass_grad.v[i] * pa->value.v[i];
    }
  });
}

Value transpose(const Value& x) {
  const Tensor& t = x.val();
  Tensor out(t.cols, t.rows);
  for (int i = 0; i < t.rows; ++i)
    for (int j = 0; j < t.cols; ++j) out(j, i) = t(i, j);
  return make_op(std::move(out), {x}, [](Node& self) {
    Node* p = self.parents[0].get();
    if (!p->requires_grad) return;
    p->ensure_pass_grad();
    for (int i = 0; i < self.pass_grad.rows; ++i)
      for (int j = 0; j < self.pass_grad.cols; ++j) p->pass_grad(j, i) += self.pass_grad(i, j);
  });
}

Value softmax_rows(const Value& x) {
  const Tensor& t = x.val();
  Tensor out(t.rows, t.cols);
  for (int i = 0; i < t.rows; ++i) {
    double mx = t(i, 0);
    for (int j = 1; j < t.cols; ++j) mx = std::max(mx, t(i, j));
    double sum = 0.0;
    for (int j = 0; j < t.cols; ++j) {
      const double e = std::exp(t(i, j) - mx);
      out(i, j) = e;
      sum += e;
    }
    for (int j = 0; j < t.cols; ++j) out(i, j) /= sum;
  }
  return make_op(std::move(out), {x}, [](Node& self) {
    Node* p = self.parents[0].get();
    if (!p->requires_grad) return;
    p->ensure_pass_grad();
    const Tensor& y = self.value;
    const Tensor& up = self.pass_grad;
    for (int i = 0; i < y.rows; ++i) {
      double s = 0.0;
      for (int j = 0; j < y.cols; ++j) s += up(i, j) * y(i, j);
      for (int j = 0; j < y.cols; ++j) p->pass_grad(i, j) += y(i, j) * (up(i, j) - s);
    }
  });
}

Value row_normalize(const Value& x, double epsilon) {
  const Tensor& t = x.val();
  for (double e : t.v) {
    if (e < 0.0) throw std::domain_error("row_normalize requires non-negative entries");
  }
  Tensor out(t.rows, t.cols);
  for (int i = 0; i < t.rows; ++i) {
    double s = 0.0;
    for (int j = 0; j < t.cols; ++j) s += t(i, j);
    if (s < epsilon) continue;  // zero-mass row stays all-zero
    for (int j = 0; j < t.cols; ++j) out(i, j) = t(i, j) / s;
  }
  return make_op(std::move(out), {x}, [epsilon](Node& self) {
    Node* p = self.parents[0].get();
    if (!p->requires_grad) return;
    p->ensure_pass_grad();
    const Tensor& t = p->value;
    const Tensor& y = self.value;
    const Tensor& up = self.pass_grad;
    for (int i = 0; i < t.rows; ++i) {
      double s = 0.0;
      for (int j = 0; j < t.cols; ++j) s += t(i, j);
      if (s < epsilon) continue;
      double dsum = 0.0;
      for (int j = 0; j < t.cols; ++j) dsum += up(i, j) * y(i, j);
      for (int j = 0; j < t.cols; ++j) p->pass_grad(i, j) += (up(i, j) - dsum) / s;
    }
  });
}

Value layer_norm_rows(const Value& x, const Value& gamma, const Value& beta) {
  constexpr double kEps = 1e-5;
  const Tensor& t = x.val();
  const Tensor& g = gamma.val();
  const Tensor& b = beta.val();
  if (g.rows != 1 || g.cols != t.cols || b.rows != 1 || b.cols != t.cols) {
    throw std::invalid_argument("layer_norm_rows parameter shape mismatch for input " + t.shape_str());
  }
  Tensor out(t.rows, t.cols);
  for (int i = 0; i < t.rows; ++i) {
    double mu = 0.0;
    for (int j = 0; j < t.cols; ++j) mu += t(i, j);
    mu /= t.cols;
    double var = 0.0;
    for (int j = 0; j < t.cols; ++j) {
      const double d = t(i, j) - mu;
      var += d * d;
    }
    var /= t.cols;
    const double inv = 1.0 / std::sqrt(var + kEps);
    for (int j = 0; j < t.cols; ++j) out(i, j) = (t(i, j) - mu) * inv * g.v[j] + b.v[j];
  }
  return make_op(std::move(out), {x, gamma, beta}, [](Node& self) {
    Node* px = self.parents[0].get();
    Node* pg = self.parents[1].get();
    Node* pb = self.parents[2].get();
    const Tensor& t = px->value;
    const Tensor& g = pg->value;
    const Tensor& up = self.pass_grad;
    const int n = t.cols;
    if (pg->requires_grad) pg->ensure_pass_grad();
    if (pb->requires_grad) pb->ensure_pass_grad();
    if (px->requires_grad) px->ensure_pass_grad();
    for (int i = 0; i < t.rows; ++i) {
      double mu = 0.0;
      for (int j = 0; j < n; ++j) mu += t(i, j);
      mu /= n;
      double var = 0.0;
      for (int j = 0; j < n; ++j) {
        const double d = t(i, j) - mu;
        var += d * d;
      }
      var /= n;
      const double inv = 1.0 / std::sqrt(var + 1e-5);
      double mean_dxhat = 0.0;
      double mean_dxhat_xhat = 0.0;
      for (int j = 0; j < n; ++j) {
        const double xhat = (t(i, j) - mu) * inv;
        const double dxhat = up(i, j) * g.v[j];
        mean_dxhat += dxhat;
        mean_dxhat_xhat += dxhat * xhat;
        if (pg->requires_grad) pg->pass_grad.v[j] += up(i, j) * xhat;
        if (pb->requires_grad) pb->pass_grad.v[j] += up(i, j);
      }
      mean_dxhat /= n;
      mean_dxhat_xhat /= n;
      if (px->requires_grad) {
        for (int j = 0; j < n; ++j) {
          const double xhat = (t(i, j) - mu) * inv;
          const double dxhat = up(i, j) * g.v[j];
          px->pass_grad(i, j) += inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
        }
      }
    }
  });
}

Value relu(const Value& x) {
  Tensor out = x.val();
  for (double& e : out.v) e = e > 0.0 ? e : 0.0;
  return make_op(std::move(out), {x}, [](Node& self) {
    Node* p = self.parents[0].get();
    if (!p->requires_grad) return;
    p->ensure_pass_grad();
    for (size_t i = 0; i < p->pass_grad.v.size(); ++i) {
      if (p->value.v[i] > 0.0) p->pass_grad.v[i] += self.pass_grad.v[i];
    }
  });
}

static double norm_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }
static double norm_pdf(double x) { return std::exp(-0.5 * x * x) * 0.3989422804014326779; }

Value gelu(const Value& x) {
  Tensor out = x.val();
  for (double& e : out.v) e = e * norm_cdf(e);
  return make_op(std::move(out), {x}, [](Node& self) {
    Node* p = self.parents[0].get();
    if (!p->requires_grad) return;
    p->ensure_pass_grad();
    for (size_t i = 0; i < p->pass_grad.v.size(); ++i) {
      const double xi = p->value.v[i];
      p->pass_grad.v[i] += self.pass_grad.v[i] * (norm_cdf(xi) + xi * norm_pdf(xi));
    }
  });
}

Value concat_rows(const std::vector<Value>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows of zero parts");
  const int cols = parts[0].val().cols;
  int rows = 0;
  for (const Value& p : parts) {
    if (p.val().cols != cols) {
      throw std::invalid_argument("concat_rows column mismatch " + p.val().shape_str());
    }
    rows += p.val().rows;
  }
  Tensor out(rows, cols);
  int r = 0;
  for (const Value& p : parts) {
    const Tensor& t = p.val();
    std::copy(t.v.begin(), t.v.end(), out.v.begin() + static_cast<size_t>(r) * cols);
    r += t.rows;
  }
  return make_op(std::move(out), parts, [](Node& self) {
    int r = 0;
    for (auto& pp : self.parents) {
      Node* p = pp.get();
      const int pr = p->value.rows;
      if (p->requires_grad) {
        p->ensure_pass_grad();
        const size_t off = static_cast<size_t>(r) * self.value.cols;
        for (size_t i = 0; i < p->pass_grad.v.size(); ++i) p->pass_grad.v[i] += self.pass_grad.v[off + i];
      }
      r += pr;
    }
  });
}

Value concat_cols(const std::vector<Value>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols of zero parts");
  const int rows = parts[0].val().rows;
  int cols = 0;
  for (const Value& p : parts) {
    if (p.val().rows != rows) {
      throw std::invalid_argument("concat_cols row mismatch " + p.val().shape_str());
    }
    cols += p.val().cols;
  }
  Tensor out(rows, cols);
  int c = 0;
  for (const Value& p : parts) {
    const Tensor& t = p.val();
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < t.cols; ++j) out(i, c + j) = t(i, j);
    c += t.cols;
  }
  return make_op(std::move(out), parts, [](Node& self) {
    int c = 0;
    for (auto& pp : self.parents) {
      Node* p = pp.get();
      const int pc = p->value.cols;
      if (p->requires_grad) {
        p->ensure_pass_grad();
        for (int i = 0; i < p->value.rows; ++i)
          for (int j = 0; j < pc; ++j) p->pass_grad(i, j) += self.pass_grad(i, c + j);
      }
      c += pc;
    }
  });
}

Value take_row(const Value& x, int i) {
  const Tensor& t = x.val();
  if (i < 0 || i >= t.rows) {
    throw std::invalid_argument("take_row index " + std::to_string(i) + " out of range for " + t.shape_str());
  }
  Tensor out(1, t.cols);
  for (int j = 0; j < t.cols; ++j) out.v[j] = t(i, j);
  return make_op(std::move(out), {x}, [i](Node& self) {
    Node* p = self.parents[0].get();
    if (!p->requires_grad) return;
    p->ensure_pass_grad();
    for (int j = 0; j < self.value.cols; ++j) p->pass_grad(i, j) += self.pass_grad.v[j];
  });
}

Value mean_pool_rows(const Value& x) {
  const Tensor& t = x.val();
  Tensor out(1, t.cols);
  for (int i = 0; i < t.rows; ++i)
    for (int j = 0; j < t.cols; ++j) out.v[j] += t(i, j);
  for (double& e : out.v) e /= t.rows;
  return make_op(std::move(out), {x}, [](Node& self) {
    Node* p = self.parents[0].get();
    if (!p->requires_grad) return;
    p->ensure_pass_grad();
    const double inv = 1.0 / p->value.rows;
    for (int i = 0; i < p->value.rows; ++i)
      for (int j = 0; j < p->value.cols; ++j) p->pass_grad(i, j) += self.pass_grad.v[j] * inv;
  });
}

Value sum_all(const Value& x) {
  double s = 0.0;
  for (double e : x.val().v) s += e;
  return make_op(Tensor::scalar(s), {x}, [](Node& self) {
    Node* p = self.parents[0].get();
    if (!p->requires_grad) return;
    p->ensure_pass_grad();
    const double up = self.pass_grad.v[0];
    for (double& e : p->pass_grad.v) e += up;
  });
}

Value embedding_rows(const Value& table, const std::vector<int>& ids) {
  const Tensor& t = table.val();
  Tensor out(static_cast<int>(ids.size()), t.cols);
  for (size_t r = 0; r < ids.size(); ++r) {
    const int id = ids[r];
    if (id < 0 || id >= t.rows) {
      throw std::invalid_argument("embedding index " + std::to_string(id) + " out of range for " + t.shape_str());
    }
    for (int j = 0; j < t.cols; ++j) out(static_cast<int>(r), j) = t(id, j);
  }
  return make_op(std::move(out), {table}, [ids](Node& self) {
    Node* p = self.parents[0].get();
    if (!p->requires_grad) return;
    p->ensure_pass_grad();
    for (size_t r = 0; r < ids.size(); ++r)
      for (int j = 0; j < self.value.cols; ++j)
        p->pass_grad(ids[r], j) += self.pass_grad(static_cast<int>(r), j);
  });
}

static void check_rowvec_pair(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows != 1 || b.rows != 1 || a.cols != b.cols) {
    throw std::invalid_argument(std::string(op) + " expects two equal-length row vectors, got " +
                                a.shape_str() + " and " + b.shape_str());
  }
}

Value dot(const Value& a, const Value& b) {
  check_rowvec_pair(a.val(), b.val(), "dot");
  double s = 0.0;
  for (int j = 0; j < a.val().cols; ++j) s += a.val().v[j] * b.val().v[j];
  return make_op(Tensor::scalar(s), {a, b}, [](Node& self) {
    Node* pa = self.parents[0].get();
    Node* pb = self.parents[1].get();
    const double up = self.pass_grad.v[0];
    if (pa->requires_grad) {
      pa->ensure_pass_grad();
      for (size_t i = 0; i < pa->pass_grad.v.size(); ++i) pa->pass_grad.v[i] += up * pb->value.v[i];
    }
    if (pb->requires_grad) {
      pb->ensure_pass_grad();
      for (size_t i = 0; i < pb->pass_grad.v.size(); ++i) pb->pass_grad.v[i] += up * pa->value.v[i];
    }
  });
}

Value logsumexp_row(const Value& x) {
  const Tensor& t = x.val();
  if (t.rows != 1) throw std::invalid_argument("logsumexp_row expects a row vector, got " + t.shape_str());
  double mx = t.v[0];
  for (double e : t.v) mx = std::max(mx, e);
  double s = 0.0;
  for (double e : t.v) s += std::exp(e - mx);
  return make_op(Tensor::scalar(mx + std::log(s)), {x}, [](Node& self) {
    Node* p = self.parents[0].get();
    if (!p->requires_grad) return;
    p->ensure_pass_grad();
    const double up = self.pass_grad.v[0];
    const double lse = self.value.v[0];
    for (size_t i = 0; i < p->pass_grad.v.size(); ++i)
      p->pass_grad.v[i] += up * std::exp(p->value.v[i] - lse);
  });
}

Value pick(const Value& x, int i) {
  const Tensor& t = x.val();
  if (t.rows != 1 || i < 0 || i >= t.cols) {
    throw std::invalid_argument("pick index " + std::to_string(i) + " out of range for " + t.shape_str());
  }
  return make_op(Tensor::scalar(t.v[i]), {x}, [i](Node& self) {
    Node* p = self.parents[0].get();
    if (!p->requires_grad) return;
    p->ensure_pass_grad();
    p->pass_grad.v[i] += self.pass_grad.v[0];
  });
}

Value l2_distance(const Value& a, const Value& b) {
  check_rowvec_pair(a.val(), b.val(), "l2_distance");
  double sq = 0.0;
  for (int j = 0; j < a.val().cols; ++j) {
    const double d = a.val().v[j] - b.val().v[j];
    sq += d * d;
  }
  const double dist = std::sqrt(sq);
  return make_op(Tensor::scalar(dist), {a, b}, [](Node& self) {
    Node* pa = self.parents[0].get();
    Node* pb = self.parents[1].get();
    const double dist = self.value.v[0];
    if (dist < 1e-12) return;  // subgradient 0 at the cusp
    const double up = self.pass_grad.v[0];
    for (size_t i = 0; i < pa->value.v.size(); ++i) {
      const double g = up * (pa->value.v[i] - pb->value.v[i]) / dist;
      if (pa->requires_grad) {
        pa->ensure_pass_grad();
        pa->pass_grad.v[i] += g;
      }
      if (pb->requires_grad) {
        pb->ensure_pass_grad();
        pb->pass_grad.v[i] -= g;
      }
    }
  });
}

Value cross_entropy(const Value& logits, int answer_index) {
  const Tensor& t = logits.val();
  if (t.rows != 1) throw std::invalid_argument("cross_entropy expects 1xN logits, got " + t.shape_str());
  if (answer_index < 0 || answer_index >= t.cols) {
    throw std::invalid_argument("cross_entropy answer index " + std::to_string(answer_index) +
                                " out of range for " + t.shape_str());
  }
  double mx = t.v[0];
  for (double e : t.v) mx = std::max(mx, e);
  double s = 0.0;
  for (double e : t.v) s += std::exp(e - mx);
  const double loss = mx + std::log(s) - t.v[answer_index];
  return make_op(Tensor::scalar(loss), {logits}, [answer_index](Node& self) {
    Node* p = self.parents[0].get();
    if (!p->requires_grad) return;
    p->ensure_pass_grad();
    const Tensor& t = p->value;
    const double up = self.pass_grad.v[0];
    double mx = t.v[0];
    for (double e : t.v) mx = std::max(mx, e);
    double s = 0.0;
    for (double e : t.v) s += std::exp(e - mx);
    for (int j = 0; j < t.cols; ++j) {
      double g = std::exp(t.v[j] - mx) / s;
      if (j == answer_index) g -= 1.0;
      p->pass_grad.v[j] += up * g;
    }
  });
}

// --- backward engine ------------------------------------------------------------

void backward(const Value& loss) {
  if (!loss.defined()) throw std::logic_error("backward on empty Value");
  const Tensor& lt = loss.val();
  if (lt.rows != 1 || lt.cols != 1) {
    throw std::invalid_argument("backward requires a scalar loss, got " + lt.shape_str());
  }
  Node* root = loss.node();
  if (!root->requires_grad) return;

  // iterative post-order DFS over the requires_grad subgraph
  std::vector<Node*> topo;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      topo.push_back(n);
      stack.pop_back();
    }
  }

  root->ensure_pass_grad();
  root->pass_grad.v[0] = 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node* n = *it;
    if (n->pass_grad.empty()) continue;  // unreachable through differentiable paths
    n->ensure_grad();
    for (size_t i = 0; i < n->grad.v.size(); ++i) n->grad.v[i] += n->pass_grad.v[i];
    if (n->backward) n->backward(*n);
    n->pass_grad = Tensor();
  }
}

}  // namespace gvqa::ad
