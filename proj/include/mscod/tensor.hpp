#pragma once

// Dense float64 tensors with tape-based reverse-mode differentiation.
//
// Every operation records a backward closure on its output when at least one
// input requires a gradient. backward() walks the recorded graph once in
// reverse topological order. Leaf gradients accumulate additively until
// zero_grad() is called.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mscod::diff {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t numel(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient flows in
  bool requires_grad = false;
  bool consumed = false;  // set on a root after backward()
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  // Returns grad, allocating zeros on first use.
  std::vector<double>& grad_buffer();
};

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows,
                          bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> values() const { return node_->value; }
  // Mutable access to the stored values. Only meaningful for leaves; used by
  // optimizers and finite-difference probes.
  std::span<double> mutable_values() { return node_->value; }
  double item() const;
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad();

  // Copy of the values with no graph history.
  Tensor detach() const;
  // Deep copy keeping requires_grad but not the gradient.
  Tensor clone() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<Node> node_;
};

// Disables graph recording on this thread while alive (inference only).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};
bool grad_enabled();

// Runs reverse-mode differentiation from a scalar root. Throws GraphError for
// a non-scalar root or when the root was already differentiated.
void backward(const Tensor& root);
void zero_grad(std::span<Tensor> tensors);

// ---- Linear algebra -------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k]x[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k]x[n,k]^T
Tensor transpose(const Tensor& a);
// x * W^T + b with W stored [out, in] and b [out]; b may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// ---- Elementwise ---------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
// a[m,n] + bias[n] on every row. The only broadcast the engine supports.
Tensor add_row(const Tensor& a, const Tensor& bias);
// a[m,n] * s[m,1] row by row.
Tensor scale_rows(const Tensor& a, const Tensor& s);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor square(const Tensor& a);
// sqrt(a + eps), with eps keeping the derivative finite at zero.
Tensor sqrt_eps(const Tensor& a, double eps);

// ---- Reductions ------------------------------------------------------------
Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, std::size_t axis);  // removes the axis
Tensor mean(const Tensor& a);
Tensor mse(const Tensor& a, const Tensor& b);

// ---- Normalization ---------------------------------------------------------
Tensor softmax(const Tensor& a, std::size_t axis);
Tensor log_softmax(const Tensor& a, std::size_t axis);
// log(sum(exp(a))) along axis, max-shifted; removes the axis.
Tensor logsumexp(const Tensor& a, std::size_t axis);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

// ---- Structural ------------------------------------------------------------
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);
Tensor reshape(const Tensor& a, Shape shape);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index);
// Rescales each row so its Euclidean norm is at most max_norm.
Tensor clip_row_norm(const Tensor& a, double max_norm, std::size_t* clipped = nullptr);

namespace testing {
// Mutation hook for the check suite: negates the gradient that matmul sends
// to its left operand so the gradient suite can prove it detects errors.
void set_matmul_grad_sign_flip(bool enabled);
bool matmul_grad_sign_flip();
}  // namespace testing

}  // namespace mscod::diff
