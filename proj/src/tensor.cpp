#include "mscod/tensor.hpp"

#include <algorithm>
#include <bit>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "mscod/errors.hpp"

namespace mscod::diff {

namespace {

std::atomic<bool> g_flip_matmul_grad{false};
thread_local int t_no_grad_depth = 0;

void require(bool condition, const std::string& message) {
  if (!condition) throw DimensionError(message);
}

void check_finite(const char* op, const std::vector<double>& values) {
  // Exponent-all-ones test on the raw bits; vectorises, unlike isfinite.
  constexpr std::uint64_t kExp = 0x7ff0000000000000ull;
  std::uint64_t bad = 0;
  for (double v : values) bad |= (std::bit_cast<std::uint64_t>(v) & kExp) == kExp;
  if (bad) throw NumericError(std::string("non-finite value produced by ") + op);
}

using BackwardFn = std::function<void(Node&)>;

Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::vector<std::shared_ptr<Node>> parents, BackwardFn fn) {
  check_finite(op, values);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->op = op;
  bool needs = t_no_grad_depth == 0 && std::any_of(parents.begin(), parents.end(),
                           [](const auto& p) { return p->requires_grad; });
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(fn);
  }
  return Tensor(std::move(node));
}

void require_matrix(const Tensor& t, const char* op) {
  require(t.rank() == 2, std::string(op) + ": expected a matrix, got shape " +
                             shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// Splits a shape around `axis` into (outer, extent, inner) strides.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// c[m,n] += a[m,k] * b[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m,n] += a[m,k] * b[n,k]^T. b is transposed once so the inner loop runs
// over contiguous output columns (vectorisable); each element still sums
// over p in order.
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  thread_local std::vector<double> bt;
  bt.resize(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  gemm_nn(a, bt.data(), c, m, k, n);
}

// c[k,n] += a[m,k]^T * b[m,n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

NoGradGuard::NoGradGuard() { ++t_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --t_no_grad_depth; }
bool grad_enabled() { return t_no_grad_depth == 0; }

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::vector<double>& Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  for (auto d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive: " + shape_str(shape));
  }
  check_finite("tensor construction", values);
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::size_t n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{1}, {value}, requires_grad);
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows,
                         bool requires_grad) {
  std::size_t cols = rows.size() ? rows.begin()->size() : 0;
  std::vector<double> values;
  for (const auto& r : rows) {
    if (r.size() != cols) throw DimensionError("from_rows: ragged rows");
    values.insert(values.end(), r.begin(), r.end());
  }
  return Tensor(Shape{rows.size(), cols}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  return shape()[axis];
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  return node_->value[row * shape().back() + col];
}

void Tensor::zero_grad() {
  node_->grad.clear();
  node_->consumed = false;
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->value, false); }

Tensor Tensor::clone() const { return Tensor(shape(), node_->value, requires_grad()); }

void zero_grad(std::span<Tensor> tensors) {
  for (auto& t : tensors) t.zero_grad();
}

void backward(const Tensor& root) {
  if (!root.defined() || root.size() != 1) {
    throw GraphError("backward() needs a scalar root, got shape " +
                     (root.defined() ? shape_str(root.shape()) : std::string("<undefined>")));
  }
  Node* top = root.node().get();
  if (top->consumed) {
    throw GraphError("backward() called twice on the same graph without zero_grad()");
  }
  if (!top->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{top, 0}};
  seen.insert(top);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  top->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
  // Interior gradients are only meaningful within this pass.
  for (Node* node : order) {
    if (node != top && node->backward_fn) node->grad.clear();
  }
  top->consumed = true;
}

// ---- Linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, "matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
  return make_result("matmul", {m, n}, std::move(out), {a.node(), b.node()}, [m, k, n](Node& self) {
    const auto& pa = self.parents[0];
    const auto& pb = self.parents[1];
    if (pa->requires_grad) {
      std::vector<double> ga(m * k, 0.0);
      gemm_nt(self.grad.data(), pb->value.data(), ga.data(), m, n, k);
      const double sign = testing::matmul_grad_sign_flip() ? -1.0 : 1.0;
      auto& dst = pa->grad_buffer();
      for (std::size_t i = 0; i < ga.size(); ++i) dst[i] += sign * ga[i];
    }
    if (pb->requires_grad) {
      gemm_tn(pa->value.data(), self.grad.data(), pb->grad_buffer().data(), m, k, n);
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  require(b.dim(1) == k, "matmul_nt: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()) + "^T");
  std::vector<double> out(m * n, 0.0);
  gemm_nt(a.values().data(), b.values().data(), out.data(), m, k, n);
  return make_result("matmul_nt", {m, n}, std::move(out), {a.node(), b.node()},
                     [m, k, n](Node& self) {
                       const auto& pa = self.parents[0];
                       const auto& pb = self.parents[1];
                       if (pa->requires_grad) {
                         // dA = G[m,n] * B[n,k]
                         std::vector<double> ga(m * k, 0.0);
                         gemm_nn(self.grad.data(), pb->value.data(), ga.data(), m, n, k);
                         const double sign = testing::matmul_grad_sign_flip() ? -1.0 : 1.0;
                         auto& dst = pa->grad_buffer();
                         for (std::size_t i = 0; i < ga.size(); ++i) dst[i] += sign * ga[i];
                       }
                       if (pb->requires_grad) {
                         // dB = G^T[n,m] * A[m,k]
                         gemm_tn(self.grad.data(), pa->value.data(), pb->grad_buffer().data(), m, n, k);
                       }
                     });
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  auto v = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = v[i * n + j];
  return make_result("transpose", {n, m}, std::move(out), {a.node()}, [m, n](Node& self) {
    auto& dst = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) dst[i * n + j] += self.grad[j * m + i];
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  Tensor y = matmul_nt(x, weight);
  return bias.defined() ? add_row(y, bias) : y;
}

// ---- Elementwise ---------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result("add", a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    for (const auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& dst = p->grad_buffer();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result("sub", a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    if (self.parents[0]->requires_grad) {
      auto& dst = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      auto& dst = self.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result("mul", a.shape(), std::move(out), {a.node(), b.node()}, [](Node& self) {
    const auto& pa = self.parents[0];
    const auto& pb = self.parents[1];
    if (pa->requires_grad) {
      auto& dst = pa->grad_buffer();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += self.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      auto& dst = pb->grad_buffer();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += self.grad[i] * pa->value[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= factor;
  return make_result("scale", a.shape(), std::move(out), {a.node()}, [factor](Node& self) {
    auto& dst = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * self.grad[i];
  });
}

Tensor add_scalar(const Tensor& a, double offset) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& v : out) v += offset;
  return make_result("add_scalar", a.shape(), std::move(out), {a.node()}, [](Node& self) {
    auto& dst = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += self.grad[i];
  });
}

Tensor add_row(const Tensor& a, const Tensor& bias) {
  require_matrix(a, "add_row");
  const std::size_t m = a.dim(0), n = a.dim(1);
  require(bias.size() == n, "add_row: bias of shape " + shape_str(bias.shape()) +
                                " does not match rows of " + shape_str(a.shape()));
  std::vector<double> out(a.values().begin(), a.values().end());
  auto bv = bias.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  return make_result("add_row", a.shape(), std::move(out), {a.node(), bias.node()},
                     [m, n](Node& self) {
                       if (self.parents[0]->requires_grad) {
                         auto& dst = self.parents[0]->grad_buffer();
                         for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += self.grad[i];
                       }
                       if (self.parents[1]->requires_grad) {
                         auto& dst = self.parents[1]->grad_buffer();
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) dst[j] += self.grad[i * n + j];
                       }
                     });
}

Tensor scale_rows(const Tensor& a, const Tensor& s) {
  require_matrix(a, "scale_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  require(s.size() == m, "scale_rows: scale of shape " + shape_str(s.shape()) +
                             " does not match rows of " + shape_str(a.shape()));
  std::vector<double> out(a.size());
  auto av = a.values(), sv = s.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] * sv[i];
  return make_result("scale_rows", a.shape(), std::move(out), {a.node(), s.node()},
                     [m, n](Node& self) {
                       const auto& pa = self.parents[0];
                       const auto& ps = self.parents[1];
                       if (pa->requires_grad) {
                         auto& dst = pa->grad_buffer();
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j)
                             dst[i * n + j] += self.grad[i * n + j] * ps->value[i];
                       }
                       if (ps->requires_grad) {
                         auto& dst = ps->grad_buffer();
                         for (std::size_t i = 0; i < m; ++i) {
                           double acc = 0.0;
                           for (std::size_t j = 0; j < n; ++j)
                             acc += self.grad[i * n + j] * pa->value[i * n + j];
                           dst[i] += acc;
                         }
                       }
                     });
}

namespace {

// Elementwise op whose derivative is expressed through input and output.
template <typename Forward, typename Derivative>
Tensor unary(const char* op, const Tensor& a, Forward f, Derivative df) {
  std::vector<double> out(a.size());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
  return make_result(op, a.shape(), std::move(out), {a.node()}, [df](Node& self) {
    const auto& p = self.parents[0];
    auto& dst = p->grad_buffer();
    for (std::size_t i = 0; i < dst.size(); ++i)
      dst[i] += self.grad[i] * df(p->value[i], self.value[i]);
  });
}

}  // namespace

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor square(const Tensor& a) {
  return unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor sqrt_eps(const Tensor& a, double eps) {
  return unary(
      "sqrt", a, [eps](double x) { return std::sqrt(x + eps); },
      [](double, double y) { return 0.5 / y; });
}

// ---- Reductions ------------------------------------------------------------

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  return make_result("sum", {1}, {acc}, {a.node()}, [](Node& self) {
    auto& dst = self.parents[0]->grad_buffer();
    for (auto& d : dst) d += self.grad[0];
  });
}

Tensor sum(const Tensor& a, std::size_t axis) {
  require(axis < a.rank(), "sum: axis " + std::to_string(axis) + " out of range for " +
                               shape_str(a.shape()));
  const AxisSplit s = split_axis(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (out_shape.empty()) out_shape.push_back(1);
  std::vector<double> out(s.outer * s.inner, 0.0);
  auto av = a.values();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < s.extent; ++e)
      for (std::size_t i = 0; i < s.inner; ++i)
        out[o * s.inner + i] += av[(o * s.extent + e) * s.inner + i];
  return make_result("sum_axis", std::move(out_shape), std::move(out), {a.node()}, [s](Node& self) {
    auto& dst = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t e = 0; e < s.extent; ++e)
        for (std::size_t i = 0; i < s.inner; ++i)
          dst[(o * s.extent + e) * s.inner + i] += self.grad[o * s.inner + i];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor mse(const Tensor& a, const Tensor& b) { return mean(square(sub(a, b))); }

// ---- Normalization ---------------------------------------------------------

Tensor softmax(const Tensor& a, std::size_t axis) {
  require(axis < a.rank(), "softmax: axis " + std::to_string(axis) + " out of range for " +
                               shape_str(a.shape()));
  const AxisSplit s = split_axis(a.shape(), axis);
  std::vector<double> out(a.size());
  auto av = a.values();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      auto idx = [&](std::size_t e) { return (o * s.extent + e) * s.inner + i; };
      double peak = av[idx(0)];
      for (std::size_t e = 1; e < s.extent; ++e) peak = std::max(peak, av[idx(e)]);
      double total = 0.0;
      for (std::size_t e = 0; e < s.extent; ++e) {
        out[idx(e)] = std::exp(av[idx(e)] - peak);
        total += out[idx(e)];
      }
      for (std::size_t e = 0; e < s.extent; ++e) out[idx(e)] /= total;
    }
  }
  return make_result("softmax", a.shape(), std::move(out), {a.node()}, [s](Node& self) {
    auto& dst = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        auto idx = [&](std::size_t e) { return (o * s.extent + e) * s.inner + i; };
        double dot = 0.0;
        for (std::size_t e = 0; e < s.extent; ++e) dot += self.grad[idx(e)] * self.value[idx(e)];
        for (std::size_t e = 0; e < s.extent; ++e)
          dst[idx(e)] += self.value[idx(e)] * (self.grad[idx(e)] - dot);
      }
    }
  });
}

Tensor log_softmax(const Tensor& a, std::size_t axis) {
  require(axis < a.rank(), "log_softmax: axis " + std::to_string(axis) + " out of range for " +
                               shape_str(a.shape()));
  const AxisSplit s = split_axis(a.shape(), axis);
  std::vector<double> out(a.size());
  auto av = a.values();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      auto idx = [&](std::size_t e) { return (o * s.extent + e) * s.inner + i; };
      double peak = av[idx(0)];
      for (std::size_t e = 1; e < s.extent; ++e) peak = std::max(peak, av[idx(e)]);
      double total = 0.0;
      for (std::size_t e = 0; e < s.extent; ++e) total += std::exp(av[idx(e)] - peak);
      const double lse = peak + std::log(total);
      for (std::size_t e = 0; e < s.extent; ++e) out[idx(e)] = av[idx(e)] - lse;
    }
  }
  return make_result("log_softmax", a.shape(), std::move(out), {a.node()}, [s](Node& self) {
    auto& dst = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        auto idx = [&](std::size_t e) { return (o * s.extent + e) * s.inner + i; };
        double total = 0.0;
        for (std::size_t e = 0; e < s.extent; ++e) total += self.grad[idx(e)];
        for (std::size_t e = 0; e < s.extent; ++e)
          dst[idx(e)] += self.grad[idx(e)] - std::exp(self.value[idx(e)]) * total;
      }
    }
  });
}

Tensor logsumexp(const Tensor& a, std::size_t axis) {
  require(axis < a.rank(), "logsumexp: axis " + std::to_string(axis) + " out of range for " +
                               shape_str(a.shape()));
  const AxisSplit s = split_axis(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (out_shape.empty()) out_shape.push_back(1);
  std::vector<double> out(s.outer * s.inner);
  auto av = a.values();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      auto idx = [&](std::size_t e) { return (o * s.extent + e) * s.inner + i; };
      double peak = av[idx(0)];
      for (std::size_t e = 1; e < s.extent; ++e) peak = std::max(peak, av[idx(e)]);
      double total = 0.0;
      for (std::size_t e = 0; e < s.extent; ++e) total += std::exp(av[idx(e)] - peak);
      out[o * s.inner + i] = peak + std::log(total);
    }
  }
  return make_result("logsumexp", std::move(out_shape), std::move(out), {a.node()}, [s](Node& self) {
    const auto& p = self.parents[0];
    auto& dst = p->grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const double lse = self.value[o * s.inner + i];
        const double g = self.grad[o * s.inner + i];
        for (std::size_t e = 0; e < s.extent; ++e) {
          const std::size_t k = (o * s.extent + e) * s.inner + i;
          dst[k] += g * std::exp(p->value[k] - lse);
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be positive");
  const std::size_t d = x.shape().back();
  require(gain.size() == d && bias.size() == d,
          "layer_norm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
              " do not match feature width of " + shape_str(x.shape()));
  const std::size_t rows = x.size() / d;
  std::vector<double> normalized(x.size());
  std::vector<double> inv_std(rows);
  std::vector<double> out(x.size());
  auto xv = x.values(), gv = gain.values(), bv = bias.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      normalized[r * d + j] = (row[j] - mu) * inv_std[r];
      out[r * d + j] = normalized[r * d + j] * gv[j] + bv[j];
    }
  }
  return make_result(
      "layer_norm", x.shape(), std::move(out), {x.node(), gain.node(), bias.node()},
      [d, rows, normalized = std::move(normalized), inv_std = std::move(inv_std)](Node& self) {
        const auto& px = self.parents[0];
        const auto& pg = self.parents[1];
        const auto& pb = self.parents[2];
        if (pg->requires_grad) {
          auto& dst = pg->grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) dst[j] += self.grad[r * d + j] * normalized[r * d + j];
        }
        if (pb->requires_grad) {
          auto& dst = pb->grad_buffer();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) dst[j] += self.grad[r * d + j];
        }
        if (px->requires_grad) {
          auto& dst = px->grad_buffer();
          std::vector<double> dn(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_dn = 0.0, mean_dn_n = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              dn[j] = self.grad[r * d + j] * pg->value[j];
              mean_dn += dn[j];
              mean_dn_n += dn[j] * normalized[r * d + j];
            }
            mean_dn /= static_cast<double>(d);
            mean_dn_n /= static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j)
              dst[r * d + j] +=
                  inv_std[r] * (dn[j] - mean_dn - normalized[r * d + j] * mean_dn_n);
          }
        }
      });
}

// ---- Structural ------------------------------------------------------------

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  require(!parts.empty(), "concat: no inputs");
  const Shape& first = parts[0].shape();
  require(axis < first.size(), "concat: axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    require(p.rank() == first.size(), "concat: rank mismatch " + shape_str(first) + " vs " +
                                          shape_str(p.shape()));
    for (std::size_t i = 0; i < first.size(); ++i) {
      if (i != axis) {
        require(p.shape()[i] == first[i], "concat: non-axis dimension mismatch " +
                                              shape_str(first) + " vs " + shape_str(p.shape()));
      }
    }
    out_shape[axis] += p.shape()[axis];
  }
  const AxisSplit whole = split_axis(out_shape, axis);
  std::vector<double> out(numel(out_shape));
  std::vector<std::shared_ptr<Node>> parents;
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t width = p.shape()[axis] * whole.inner;
    auto pv = p.values();
    for (std::size_t o = 0; o < whole.outer; ++o)
      std::copy_n(pv.data() + o * width, width,
                  out.data() + o * whole.extent * whole.inner + offset * whole.inner);
    offsets.push_back(offset);
    offset += p.shape()[axis];
    parents.push_back(p.node());
  }
  return make_result("concat", std::move(out_shape), std::move(out), std::move(parents),
                     [whole, axis, offsets](Node& self) {
                       for (std::size_t k = 0; k < self.parents.size(); ++k) {
                         const auto& p = self.parents[k];
                         if (!p->requires_grad) continue;
                         const std::size_t width = p->shape[axis] * whole.inner;
                         auto& dst = p->grad_buffer();
                         for (std::size_t o = 0; o < whole.outer; ++o) {
                           const double* src = self.grad.data() + o * whole.extent * whole.inner +
                                               offsets[k] * whole.inner;
                           for (std::size_t i = 0; i < width; ++i) dst[o * width + i] += src[i];
                         }
                       }
                     });
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor reshape(const Tensor& a, Shape shape) {
  require(numel(shape) == a.size(), "reshape: cannot view " + shape_str(a.shape()) + " as " +
                                        shape_str(shape));
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_result("reshape", std::move(shape), std::move(out), {a.node()}, [](Node& self) {
    auto& dst = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += self.grad[i];
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  require_matrix(a, "slice_rows");
  require(begin < end && end <= a.dim(0), "slice_rows: range [" + std::to_string(begin) + "," +
                                              std::to_string(end) + ") invalid for " +
                                              shape_str(a.shape()));
  const std::size_t n = a.dim(1);
  std::vector<double> out(a.values().begin() + static_cast<std::ptrdiff_t>(begin * n),
                          a.values().begin() + static_cast<std::ptrdiff_t>(end * n));
  return make_result("slice_rows", {end - begin, n}, std::move(out), {a.node()},
                     [begin, n](Node& self) {
                       auto& dst = self.parents[0]->grad_buffer();
                       for (std::size_t i = 0; i < self.grad.size(); ++i) dst[begin * n + i] += self.grad[i];
                     });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index) {
  require_matrix(a, "gather_rows");
  require(!index.empty(), "gather_rows: empty index");
  const std::size_t rows = a.dim(0), n = a.dim(1);
  std::vector<double> out(index.size() * n);
  auto av = a.values();
  for (std::size_t r = 0; r < index.size(); ++r) {
    require(index[r] < rows, "gather_rows: index " + std::to_string(index[r]) +
                                 " out of range for " + shape_str(a.shape()));
    std::copy_n(av.data() + index[r] * n, n, out.data() + r * n);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_result("gather_rows", {index.size(), n}, std::move(out), {a.node()},
                     [idx = std::move(idx), n](Node& self) {
                       auto& dst = self.parents[0]->grad_buffer();
                       for (std::size_t r = 0; r < idx.size(); ++r)
                         for (std::size_t j = 0; j < n; ++j) dst[idx[r] * n + j] += self.grad[r * n + j];
                     });
}

Tensor clip_row_norm(const Tensor& a, double max_norm, std::size_t* clipped) {
  require_matrix(a, "clip_row_norm");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> norms(m, 0.0);
  std::vector<double> out(a.values().begin(), a.values().end());
  std::size_t count = 0;
  for (std::size_t i = 0; i < m; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < n; ++j) sq += out[i * n + j] * out[i * n + j];
    norms[i] = std::sqrt(sq);
    if (norms[i] > max_norm) {
      ++count;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] *= max_norm / norms[i];
    }
  }
  if (clipped) *clipped = count;
  return make_result("clip_row_norm", a.shape(), std::move(out), {a.node()},
                     [m, n, max_norm, norms = std::move(norms)](Node& self) {
                       const auto& p = self.parents[0];
                       auto& dst = p->grad_buffer();
                       for (std::size_t i = 0; i < m; ++i) {
                         const double* g = self.grad.data() + i * n;
                         const double* x = p->value.data() + i * n;
                         if (norms[i] <= max_norm) {
                           for (std::size_t j = 0; j < n; ++j) dst[i * n + j] += g[j];
                           continue;
                         }
                         // y = c x / |x|  =>  dy/dx = c/|x| (I - u u^T)
                         double gu = 0.0;
                         for (std::size_t j = 0; j < n; ++j) gu += g[j] * x[j] / norms[i];
                         for (std::size_t j = 0; j < n; ++j)
                           dst[i * n + j] += max_norm / norms[i] * (g[j] - gu * x[j] / norms[i]);
                       }
                     });
}

namespace testing {
void set_matmul_grad_sign_flip(bool enabled) { g_flip_matmul_grad = enabled; }
bool matmul_grad_sign_flip() { return g_flip_matmul_grad; }
}  // namespace testing

}  // namespace mscod::diff
