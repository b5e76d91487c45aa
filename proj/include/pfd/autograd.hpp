#ifndef PFD_AUTOGRAD_HPP_
#define PFD_AUTOGRAD_HPP_

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace pfd {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

namespace ag {

/*
 * Minimal tape-free reverse-mode autodiff over row-major double matrices.
 *
 * Every Var owns a node holding its value; nodes created from inputs that
 * require gradients keep a closure that scatters the node's gradient into
 * its parents. backward() walks the graph in reverse topological order.
 * Graphs are freed when the last Var referencing the root goes away, while
 * parameter leaves persist and accumulate gradients across calls.
 */
struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g);
};

class Var {
 public:
  Var() = default;
  explicit Var(Matrix value, bool requires_grad = false);
  static Var scalar(double v);

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const;

  void zero_grad();
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
  friend Var make_result(Matrix value, std::vector<Var> parents,
                         std::function<void(Node&)> backward);
};

// Builds a result node; the backward closure is dropped when no parent needs it.
Var make_result(Matrix value, std::vector<Var> parents, std::function<void(Node&)> backward);

// Seeds d(root)/d(root) = 1 (root must be 1x1) and propagates to every leaf.
void backward(const Var& root);

bool grad_enabled();

// Disables graph construction for the lifetime of the guard.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

Var constant(Matrix value);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var matmul(const Var& a, const Var& b);
// a (R x C) + row (1 x C) broadcast over rows.
Var add_row(const Var& a, const Var& row);
// Multiplies row r of a by the constant weights[r].
Var scale_rows(const Var& a, const RowVector& weights);
Var linear(const Var& x, const Var& weight, const Var& bias);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-6);
Var gelu(const Var& x);
Var relu(const Var& x);

Var slice_rows(const Var& a, Eigen::Index begin, Eigen::Index count);
Var concat_rows(std::span<const Var> parts);
Var gather_rows(const Var& a, std::span<const int> indices);
Var mean_rows(const Var& a);
Var sum(const Var& a);
Var sum_scalars(std::span<const Var> terms);

// Cosine similarity of two 1 x D rows, returned as 1x1.
Var cosine(const Var& a, const Var& b, double eps = 1e-12);

// Softmax cross-entropy of a 1 x C logit row at class `target`.
Var cross_entropy(const Var& logits, int target, double label_smoothing = 0.0);

// Scaled dot-product attention with `heads` heads over column blocks.
// q: Tq x D, k/v: Tk x D. When `weights_out` is non-null it receives the
// head-averaged Tq x Tk attention matrix.
Var attention(const Var& q, const Var& k, const Var& v, int heads, Matrix* weights_out = nullptr);

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(double s, const Var& a);
Var operator*(const Var& a, double s);

}  // namespace ag
}  // namespace pfd

#endif  // PFD_AUTOGRAD_HPP_
