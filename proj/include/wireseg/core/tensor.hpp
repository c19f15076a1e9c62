// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reverse-mode autodiff over dense 2-D double tensors. Small by intent: the
// segmentation models and every training loss in this library are built from
// the ops below, and analytic gradients come out of backward().

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace wireseg {

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

// Disables graph construction in scope (inference / frozen-model forwards).
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev; }
};

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

struct TensorNode {
  int rows = 0;
  int cols = 0;
  std::vector<double> val;
  std::vector<double> grad;  // same size as val when requires_grad
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(TensorNode&)> backfn;  // pushes grad into parents

  size_t numel() const { return static_cast<size_t>(rows) * cols; }
  void ensure_grad() {
    if (grad.size() != val.size()) grad.assign(val.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr n) : n_(std::move(n)) {}

  static Tensor zeros(int r, int c, bool requires_grad = false) {
    auto n = std::make_shared<TensorNode>();
    n->rows = r;
    n->cols = c;
    n->val.assign(static_cast<size_t>(r) * c, 0.0);
    n->requires_grad = requires_grad;
    if (requires_grad) n->ensure_grad();
    return Tensor(n);
  }

  static Tensor full(int r, int c, double v, bool requires_grad = false) {
    Tensor t = zeros(r, c, requires_grad);
    for (auto& x : t.node()->val) x = v;
    return t;
  }

  static Tensor from(int r, int c, std::vector<double> data, bool requires_grad = false) {
    if (data.size() != static_cast<size_t>(r) * c)
      throw std::invalid_argument("Tensor::from: data size does not match shape");
    auto n = std::make_shared<TensorNode>();
    n->rows = r;
    n->cols = c;
    n->val = std::move(data);
    n->requires_grad = requires_grad;
    if (requires_grad) n->ensure_grad();
    return Tensor(n);
  }

  static Tensor scalar(double v, bool requires_grad = false) { return full(1, 1, v, requires_grad); }

  bool defined() const { return n_ != nullptr; }
  int rows() const { return n_->rows; }
  int cols() const { return n_->cols; }
  size_t numel() const { return n_->numel(); }
  bool requires_grad() const { return n_->requires_grad; }

  const std::vector<double>& values() const { return n_->val; }
  std::vector<double>& values() { return n_->val; }
  const std::vector<double>& grads() const { return n_->grad; }
  double value(int r, int c) const { return n_->val[static_cast<size_t>(r) * cols() + c]; }
  double item() const {
    if (numel() != 1) throw std::logic_error("Tensor::item: tensor is not scalar");
    return n_->val[0];
  }

  NodePtr node() const { return n_; }

  void zero_grad() {
    if (n_->requires_grad) n_->grad.assign(n_->val.size(), 0.0);
  }

  // Leaf copy outside the graph.
  Tensor detach() const {
    auto n = std::make_shared<TensorNode>();
    n->rows = rows();
    n->cols = cols();
    n->val = n_->val;
    n->requires_grad = false;
    return Tensor(n);
  }

  Tensor clone_leaf(bool requires_grad) const {
    Tensor t = detach();
    t.n_->requires_grad = requires_grad;
    if (requires_grad) t.n_->ensure_grad();
    return t;
  }

  // Reverse pass from a scalar root. Gradients accumulate into leaves.
  void backward() const {
    if (numel() != 1) throw std::logic_error("backward: root must be scalar");
    if (!n_->requires_grad) return;
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;
    std::vector<std::pair<TensorNode*, size_t>> stack;
    stack.push_back({n_.get(), 0});
    seen.insert(n_.get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        TensorNode* p = node->parents[next++].get();
        if (p->requires_grad && !seen.count(p)) {
          seen.insert(p);
          stack.push_back({p, 0});
        }
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
    n_->ensure_grad();
    n_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if ((*it)->backfn) (*it)->backfn(**it);
    }
  }

 private:
  NodePtr n_;
};

namespace detail {

inline Tensor make_result(int r, int c, std::vector<Tensor> parents) {
  auto n = std::make_shared<TensorNode>();
  n->rows = r;
  n->cols = c;
  n->val.assign(static_cast<size_t>(r) * c, 0.0);
  bool rg = false;
  if (grad_mode()) {
    for (const auto& p : parents) rg = rg || p.requires_grad();
  }
  n->requires_grad = rg;
  if (rg) {
    n->ensure_grad();
    for (auto& p : parents) {
      n->parents.push_back(p.node());
      p.node()->ensure_grad();
    }
  }
  return Tensor(n);
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "add");
  Tensor out = detail::make_result(a.rows(), a.cols(), {a, b});
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node();
    out.node()->backfn = [an, bn](TensorNode& self) {
      if (an->requires_grad)
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
      if (bn->requires_grad)
        for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
    };
  }
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor out = detail::make_result(a.rows(), a.cols(), {a, b});
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node();
    out.node()->backfn = [an, bn](TensorNode& self) {
      if (an->requires_grad)
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
      if (bn->requires_grad)
        for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
    };
  }
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor out = detail::make_result(a.rows(), a.cols(), {a, b});
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node();
    out.node()->backfn = [an, bn](TensorNode& self) {
      if (an->requires_grad)
        for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * bn->val[i];
      if (bn->requires_grad)
        for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i] * an->val[i];
    };
  }
  return out;
}

// a / b elementwise.
inline Tensor div(const Tensor& a, const Tensor& b) {
  detail::check_same_shape(a, b, "div");
  Tensor out = detail::make_result(a.rows(), a.cols(), {a, b});
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] / bv[i];
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node();
    out.node()->backfn = [an, bn](TensorNode& self) {
      for (size_t i = 0; i < self.grad.size(); ++i) {
        const double inv = 1.0 / bn->val[i];
        if (an->requires_grad) an->grad[i] += self.grad[i] * inv;
        if (bn->requires_grad) bn->grad[i] -= self.grad[i] * an->val[i] * inv * inv;
      }
    };
  }
  return out;
}

inline Tensor scale(const Tensor& a, double s) {
  Tensor out = detail::make_result(a.rows(), a.cols(), {a});
  const auto& av = a.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * s;
  if (out.requires_grad()) {
    auto an = a.node();
    out.node()->backfn = [an, s](TensorNode& self) {
      for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * s;
    };
  }
  return out;
}

inline Tensor add_scalar(const Tensor& a, double s) {
  Tensor out = detail::make_result(a.rows(), a.cols(), {a});
  const auto& av = a.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + s;
  if (out.requires_grad()) {
    auto an = a.node();
    out.node()->backfn = [an](TensorNode& self) {
      for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    };
  }
  return out;
}

namespace detail {
template <typename F, typename DF>
Tensor unary(const Tensor& a, F f, DF dfdx) {
  Tensor out = make_result(a.rows(), a.cols(), {a});
  const auto& av = a.values();
  auto& ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = f(av[i]);
  if (out.requires_grad()) {
    auto an = a.node();
    out.node()->backfn = [an, dfdx](TensorNode& self) {
      for (size_t i = 0; i < self.grad.size(); ++i)
        an->grad[i] += self.grad[i] * dfdx(an->val[i], self.val[i]);
    };
  }
  return out;
}
}  // namespace detail

inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }

inline Tensor relu(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

// tanh-approximation GELU.
inline Tensor gelu(const Tensor& a) {
  constexpr double k = 0.7978845608028654f;  // sqrt(2/pi)
  return detail::unary(
      a,
      [](double x) {
        const double u = k * (x + 0.044715f * x * x * x);
        return 0.5 * x * (1.0 + std::tanh(u));
      },
      [](double x, double) {
        const double u = k * (x + 0.044715f * x * x * x);
        const double t = std::tanh(u);
        const double du = k * (1.0 + 3.0f * 0.044715f * x * x);
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
      });
}

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

inline Tensor log_t(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Tensor exp_t(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Tensor sqrt_t(const Tensor& a) {
  return detail::unary(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

// x^p with constant exponent. Gradient uses p*x^(p-1).
inline Tensor pow_scalar(const Tensor& a, double p) {
  return detail::unary(
      a, [p](double x) { return std::pow(x, p); },
      [p](double x, double) { return p * std::pow(x, p - 1.0); });
}

// Gradient is passed through strictly inside (lo, hi) and zero elsewhere.
inline Tensor clamp(const Tensor& a, double lo, double hi) {
  return detail::unary(
      a, [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
      [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& a) {
  Tensor out = detail::make_result(1, 1, {a});
  double acc = 0.0;
  for (double x : a.values()) acc += x;
  out.values()[0] = static_cast<double>(acc);
  if (out.requires_grad()) {
    auto an = a.node();
    out.node()->backfn = [an](TensorNode& self) {
      const double g = self.grad[0];
      for (auto& x : an->grad) x += g;
    };
  }
  return out;
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

// ---------------------------------------------------------------------------
// Matrix ops
// ---------------------------------------------------------------------------

namespace detail {
// C (+)= op(A) * op(B); raw kernel shared by forward and backward passes.
inline void gemm(bool ta, bool tb, int m, int n, int k, const double* A, int lda, const double* B,
                 int ldb, double* C, int ldc) {
  if (!ta && !tb) {
    // C[m,n] += A[m,k] B[k,n]
#pragma omp parallel for schedule(static) if (m > 8)
    for (int i = 0; i < m; ++i) {
      double* c = C + static_cast<size_t>(i) * ldc;
      for (int p = 0; p < k; ++p) {
        const double a = A[static_cast<size_t>(i) * lda + p];
        const double* b = B + static_cast<size_t>(p) * ldb;
        for (int j = 0; j < n; ++j) c[j] += a * b[j];
      }
    }
  } else if (!ta && tb) {
    // C[m,n] += A[m,k] B[n,k]^T
#pragma omp parallel for schedule(static) if (m > 8)
    for (int i = 0; i < m; ++i) {
      const double* a = A + static_cast<size_t>(i) * lda;
      double* c = C + static_cast<size_t>(i) * ldc;
      for (int j = 0; j < n; ++j) {
        const double* b = B + static_cast<size_t>(j) * ldb;
        double acc = 0.0;
        for (int p = 0; p < k; ++p) acc += a[p] * b[p];
        c[j] += acc;
      }
    }
  } else if (ta && !tb) {
    // C[m,n] += A[k,m]^T B[k,n]
#pragma omp parallel for schedule(static) if (m > 8)
    for (int i = 0; i < m; ++i) {
      double* c = C + static_cast<size_t>(i) * ldc;
      for (int p = 0; p < k; ++p) {
        const double a = A[static_cast<size_t>(p) * lda + i];
        const double* b = B + static_cast<size_t>(p) * ldb;
        for (int j = 0; j < n; ++j) c[j] += a * b[j];
      }
    }
  } else {
    // C[m,n] += A[k,m]^T B[n,k]^T
    for (int i = 0; i < m; ++i) {
      double* c = C + static_cast<size_t>(i) * ldc;
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int p = 0; p < k; ++p)
          acc += A[static_cast<size_t>(p) * lda + i] * B[static_cast<size_t>(j) * ldb + p];
        c[j] += acc;
      }
    }
  }
}
}  // namespace detail

// C = A * B, with optional transposes applied to the operands.
inline Tensor matmul(const Tensor& a, const Tensor& b, bool ta = false, bool tb = false) {
  const int m = ta ? a.cols() : a.rows();
  const int ka = ta ? a.rows() : a.cols();
  const int kb = tb ? b.cols() : b.rows();
  const int n = tb ? b.rows() : b.cols();
  if (ka != kb) throw std::invalid_argument("matmul: inner dimensions mismatch");
  Tensor out = detail::make_result(m, n, {a, b});
  detail::gemm(ta, tb, m, n, ka, a.values().data(), a.cols(), b.values().data(), b.cols(),
               out.values().data(), n);
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node();
    out.node()->backfn = [an, bn, ta, tb, m, n, ka](TensorNode& self) {
      const double* G = self.grad.data();
      if (an->requires_grad) {
        // dA = G op(B)^T arranged for each transpose case
        if (!ta)
          detail::gemm(false, !tb, an->rows, an->cols, n, G, n, bn->val.data(), bn->cols,
                       an->grad.data(), an->cols);
        else
          detail::gemm(tb, true, an->rows, an->cols, n, bn->val.data(), bn->cols, G, n,
                       an->grad.data(), an->cols);
      }
      if (bn->requires_grad) {
        if (!tb)
          detail::gemm(!ta, false, bn->rows, bn->cols, m, an->val.data(), an->cols, G, n,
                       bn->grad.data(), bn->cols);
        else
          detail::gemm(true, ta, bn->rows, bn->cols, m, G, n, an->val.data(), an->cols,
                       bn->grad.data(), bn->cols);
      }
    };
  }
  return out;
}

// x[m,k] * W[out,k]^T + bias[1,out]
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y = matmul(x, w, false, true);
  if (b.defined()) {
    if (b.rows() != 1 || b.cols() != y.cols()) throw std::invalid_argument("linear: bad bias shape");
    Tensor out = detail::make_result(y.rows(), y.cols(), {y, b});
    const auto& yv = y.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    const int n = y.cols();
    for (int i = 0; i < y.rows(); ++i)
      for (int j = 0; j < n; ++j) ov[static_cast<size_t>(i) * n + j] = yv[static_cast<size_t>(i) * n + j] + bv[j];
    if (out.requires_grad()) {
      auto yn = y.node(), bn = b.node();
      out.node()->backfn = [yn, bn, n](TensorNode& self) {
        if (yn->requires_grad)
          for (size_t i = 0; i < self.grad.size(); ++i) yn->grad[i] += self.grad[i];
        if (bn->requires_grad)
          for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i % n] += self.grad[i];
      };
    }
    return out;
  }
  return y;
}

// Broadcast a row vector [1,n] over the rows of x[m,n], elementwise multiply.
inline Tensor mul_rowvec(const Tensor& x, const Tensor& v) {
  if (v.rows() != 1 || v.cols() != x.cols()) throw std::invalid_argument("mul_rowvec: bad shape");
  Tensor out = detail::make_result(x.rows(), x.cols(), {x, v});
  const auto& xv = x.values();
  const auto& vv = v.values();
  auto& ov = out.values();
  const int n = x.cols();
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < n; ++j)
      ov[static_cast<size_t>(i) * n + j] = xv[static_cast<size_t>(i) * n + j] * vv[j];
  if (out.requires_grad()) {
    auto xn = x.node(), vn = v.node();
    out.node()->backfn = [xn, vn, n](TensorNode& self) {
      for (size_t i = 0; i < self.grad.size(); ++i) {
        const int j = static_cast<int>(i % n);
        if (xn->requires_grad) xn->grad[i] += self.grad[i] * vn->val[j];
        if (vn->requires_grad) vn->grad[j] += self.grad[i] * xn->val[i];
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape ops (implemented as gathers; backward scatter-adds)
// ---------------------------------------------------------------------------

inline Tensor gather(const Tensor& a, std::shared_ptr<std::vector<uint32_t>> idx, int r, int c) {
  if (idx->size() != static_cast<size_t>(r) * c) throw std::invalid_argument("gather: bad index size");
  Tensor out = detail::make_result(r, c, {a});
  const auto& av = a.values();
  auto& ov = out.values();
  const auto& ix = *idx;
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[ix[i]];
  if (out.requires_grad()) {
    auto an = a.node();
    out.node()->backfn = [an, idx](TensorNode& self) {
      const auto& ix = *idx;
      for (size_t i = 0; i < self.grad.size(); ++i) an->grad[ix[i]] += self.grad[i];
    };
  }
  return out;
}

inline Tensor reshape(const Tensor& a, int r, int c) {
  if (static_cast<size_t>(r) * c != a.numel()) throw std::invalid_argument("reshape: numel mismatch");
  auto idx = std::make_shared<std::vector<uint32_t>>(a.numel());
  for (size_t i = 0; i < idx->size(); ++i) (*idx)[i] = static_cast<uint32_t>(i);
  return gather(a, idx, r, c);
}

inline Tensor transpose(const Tensor& a) {
  auto idx = std::make_shared<std::vector<uint32_t>>(a.numel());
  const int r = a.rows(), c = a.cols();
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) (*idx)[static_cast<size_t>(j) * r + i] = static_cast<uint32_t>(i * c + j);
  return gather(a, idx, c, r);
}

inline Tensor slice_cols(const Tensor& a, int c0, int c1) {
  if (c0 < 0 || c1 > a.cols() || c0 >= c1) throw std::invalid_argument("slice_cols: bad range");
  const int r = a.rows(), w = c1 - c0;
  auto idx = std::make_shared<std::vector<uint32_t>>(static_cast<size_t>(r) * w);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < w; ++j)
      (*idx)[static_cast<size_t>(i) * w + j] = static_cast<uint32_t>(i * a.cols() + c0 + j);
  return gather(a, idx, r, w);
}

inline Tensor slice_rows(const Tensor& a, int r0, int r1) {
  if (r0 < 0 || r1 > a.rows() || r0 >= r1) throw std::invalid_argument("slice_rows: bad range");
  const int h = r1 - r0, c = a.cols();
  auto idx = std::make_shared<std::vector<uint32_t>>(static_cast<size_t>(h) * c);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < c; ++j)
      (*idx)[static_cast<size_t>(i) * c + j] = static_cast<uint32_t>((r0 + i) * c + j);
  return gather(a, idx, h, c);
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  const int r = parts[0].rows();
  int c = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) throw std::invalid_argument("concat_cols: row mismatch");
    c += p.cols();
  }
  Tensor out = detail::make_result(r, c, parts);
  auto& ov = out.values();
  int off = 0;
  for (const auto& p : parts) {
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < p.cols(); ++j)
        ov[static_cast<size_t>(i) * c + off + j] = p.values()[static_cast<size_t>(i) * p.cols() + j];
    off += p.cols();
  }
  if (out.requires_grad()) {
    std::vector<NodePtr> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    out.node()->backfn = [nodes, r, c](TensorNode& self) {
      int off = 0;
      for (auto& n : nodes) {
        if (n->requires_grad) {
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < n->cols; ++j)
              n->grad[static_cast<size_t>(i) * n->cols + j] += self.grad[static_cast<size_t>(i) * c + off + j];
        }
        off += n->cols;
      }
    };
  }
  return out;
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  const int c = parts[0].cols();
  int r = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) throw std::invalid_argument("concat_rows: col mismatch");
    r += p.rows();
  }
  Tensor out = detail::make_result(r, c, parts);
  auto& ov = out.values();
  size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.values().begin(), p.values().end(), ov.begin() + off);
    off += p.numel();
  }
  if (out.requires_grad()) {
    std::vector<NodePtr> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    out.node()->backfn = [nodes](TensorNode& self) {
      size_t off = 0;
      for (auto& n : nodes) {
        if (n->requires_grad)
          for (size_t i = 0; i < n->grad.size(); ++i) n->grad[i] += self.grad[off + i];
        off += n->val.size();
      }
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Row-wise softmax and layer norm
// ---------------------------------------------------------------------------

inline Tensor softmax_rows(const Tensor& a) {
  Tensor out = detail::make_result(a.rows(), a.cols(), {a});
  const int n = a.cols();
  const auto& av = a.values();
  auto& ov = out.values();
  for (int i = 0; i < a.rows(); ++i) {
    const double* x = av.data() + static_cast<size_t>(i) * n;
    double* y = ov.data() + static_cast<size_t>(i) * n;
    double mx = x[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double s = 0.0;
    for (int j = 0; j < n; ++j) {
      y[j] = std::exp(x[j] - mx);
      s += y[j];
    }
    const double inv = 1.0 / s;
    for (int j = 0; j < n; ++j) y[j] *= inv;
  }
  if (out.requires_grad()) {
    auto an = a.node();
    out.node()->backfn = [an, n](TensorNode& self) {
      for (int i = 0; i < self.rows; ++i) {
        const double* y = self.val.data() + static_cast<size_t>(i) * n;
        const double* g = self.grad.data() + static_cast<size_t>(i) * n;
        double dot = 0.0;
        for (int j = 0; j < n; ++j) dot += y[j] * g[j];
        double* ag = an->grad.data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) ag[j] += y[j] * (g[j] - dot);
      }
    };
  }
  return out;
}

inline Tensor layernorm_rows(const Tensor& a, const Tensor& gamma, const Tensor& beta,
                             double eps = 1e-5f) {
  if (gamma.rows() != 1 || gamma.cols() != a.cols() || beta.rows() != 1 || beta.cols() != a.cols())
    throw std::invalid_argument("layernorm: bad affine shape");
  Tensor out = detail::make_result(a.rows(), a.cols(), {a, gamma, beta});
  const int n = a.cols();
  const auto& av = a.values();
  auto& ov = out.values();
  auto xhat = std::make_shared<std::vector<double>>(a.numel());
  auto inv_std = std::make_shared<std::vector<double>>(a.rows());
  for (int i = 0; i < a.rows(); ++i) {
    const double* x = av.data() + static_cast<size_t>(i) * n;
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += x[j];
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= n;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    double* xh = xhat->data() + static_cast<size_t>(i) * n;
    double* y = ov.data() + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      xh[j] = (x[j] - mu) * is;
      y[j] = xh[j] * gamma.values()[j] + beta.values()[j];
    }
  }
  if (out.requires_grad()) {
    auto an = a.node(), gn = gamma.node(), bn = beta.node();
    out.node()->backfn = [an, gn, bn, n, xhat, inv_std](TensorNode& self) {
      for (int i = 0; i < self.rows; ++i) {
        const double* g = self.grad.data() + static_cast<size_t>(i) * n;
        const double* xh = xhat->data() + static_cast<size_t>(i) * n;
        if (gn->requires_grad)
          for (int j = 0; j < n; ++j) gn->grad[j] += g[j] * xh[j];
        if (bn->requires_grad)
          for (int j = 0; j < n; ++j) bn->grad[j] += g[j];
        if (an->requires_grad) {
          // dx = (1/n) * inv_std * (n*dxhat - sum(dxhat) - xhat*sum(dxhat*xhat))
          double s1 = 0.0, s2 = 0.0;
          for (int j = 0; j < n; ++j) {
            const double dxh = g[j] * gn->val[j];
            s1 += dxh;
            s2 += dxh * xh[j];
          }
          double* ag = an->grad.data() + static_cast<size_t>(i) * n;
          const double is = (*inv_std)[i];
          for (int j = 0; j < n; ++j) {
            const double dxh = g[j] * gn->val[j];
            ag[j] += is / n * (n * dxh - s1 - xh[j] * s2);
          }
        }
      }
    };
  }
  return out;
}

}  // namespace wireseg
