#include "pfd/autograd.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace pfd::ag {

namespace {

thread_local bool g_grad_enabled = true;

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  }
}

Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (!requires_grad) return;
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Var::Var(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Var Var::scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return Var(std::move(m));
}

double Var::item() const {
  if (node_->value.size() != 1) throw std::logic_error("item() on non-scalar Var");
  return node_->value(0, 0);
}

void Var::zero_grad() {
  if (node_) node_->grad.resize(0, 0);
}

Var make_result(Matrix value, std::vector<Var> parents, std::function<void(Node&)> backward) {
  Var out(std::move(value));
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->parents.reserve(parents.size());
  for (auto& p : parents) out.node_->parents.push_back(p.node());
  out.node_->backward = std::move(backward);
  return out;
}

void backward(const Var& root) {
  if (root.value().size() != 1) throw std::logic_error("backward() needs a scalar root");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS for a reverse topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() != 0) n->backward(*n);
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var constant(Matrix value) { return Var(std::move(value), false); }

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  return make_result(a.value() + b.value(), {a, b}, [](Node& n) {
    parent(n, 0).accumulate(n.grad);
    parent(n, 1).accumulate(n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  return make_result(a.value() - b.value(), {a, b}, [](Node& n) {
    parent(n, 0).accumulate(n.grad);
    parent(n, 1).accumulate(-n.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  return make_result(std::move(out), {a, b}, [](Node& n) {
    Node& pa = parent(n, 0);
    Node& pb = parent(n, 1);
    if (pa.requires_grad) pa.accumulate(n.grad.cwiseProduct(pb.value));
    if (pb.requires_grad) pb.accumulate(n.grad.cwiseProduct(pa.value));
  });
}

Var scale(const Var& a, double s) {
  return make_result(a.value() * s, {a}, [s](Node& n) { parent(n, 0).accumulate(n.grad * s); });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Matrix out = a.value() * b.value();
  return make_result(std::move(out), {a, b}, [](Node& n) {
    Node& pa = parent(n, 0);
    Node& pb = parent(n, 1);
    if (pa.requires_grad) pa.accumulate(n.grad * pb.value.transpose());
    if (pb.requires_grad) pb.accumulate(pa.value.transpose() * n.grad);
  });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw std::invalid_argument("add_row: row must be 1 x cols(a)");
  }
  Matrix out = a.value().rowwise() + row.value().row(0);
  return make_result(std::move(out), {a, row}, [](Node& n) {
    parent(n, 0).accumulate(n.grad);
    if (parent(n, 1).requires_grad) parent(n, 1).accumulate(n.grad.colwise().sum());
  });
}

Var scale_rows(const Var& a, const RowVector& weights) {
  if (weights.size() != a.rows()) throw std::invalid_argument("scale_rows: weight count mismatch");
  Matrix out = weights.transpose().asDiagonal() * a.value();
  return make_result(std::move(out), {a}, [weights](Node& n) {
    parent(n, 0).accumulate(weights.transpose().asDiagonal() * n.grad);
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  if (x.cols() != weight.rows() || bias.cols() != weight.cols() || bias.rows() != 1) {
    throw std::invalid_argument("linear: shape mismatch");
  }
  Matrix out = (x.value() * weight.value()).rowwise() + bias.value().row(0);
  return make_result(std::move(out), {x, weight, bias}, [](Node& n) {
    Node& px = parent(n, 0);
    Node& pw = parent(n, 1);
    Node& pb = parent(n, 2);
    if (px.requires_grad) px.accumulate(n.grad * pw.value.transpose());
    if (pw.requires_grad) pw.accumulate(px.value.transpose() * n.grad);
    if (pb.requires_grad) pb.accumulate(n.grad.colwise().sum());
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Eigen::Index rows = x.rows();
  const Eigen::Index cols = x.cols();
  if (gamma.cols() != cols || beta.cols() != cols) {
    throw std::invalid_argument("layer_norm: affine parameter width mismatch");
  }
  Matrix xhat(rows, cols);
  Eigen::VectorXd inv_std(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto row = x.value().row(r);
    const double mu = row.mean();
    const double var = (row.array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (row.array() - mu) * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() +
               beta.value().row(0).array();
  return make_result(std::move(out), {x, gamma, beta},
                     [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& n) {
    Node& px = parent(n, 0);
    Node& pg = parent(n, 1);
    Node& pb = parent(n, 2);
    if (pg.requires_grad) pg.accumulate(n.grad.cwiseProduct(xhat).colwise().sum());
    if (pb.requires_grad) pb.accumulate(n.grad.colwise().sum());
    if (px.requires_grad) {
      Matrix dxhat = n.grad.array().rowwise() * pg.value.row(0).array();
      Matrix dx(dxhat.rows(), dxhat.cols());
      for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
        const double m1 = dxhat.row(r).mean();
        const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
        dx.row(r) = inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
      }
      px.accumulate(dx);
    }
  });
}

Var gelu(const Var& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  Matrix out = x.value().unaryExpr(
      [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); });
  return make_result(std::move(out), {x}, [](Node& n) {
    Node& px = parent(n, 0);
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    Matrix d = px.value.unaryExpr([inv_sqrt_2pi](double v) {
      return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
    });
    px.accumulate(n.grad.cwiseProduct(d));
  });
}

Var relu(const Var& x) {
  Matrix out = x.value().cwiseMax(0.0);
  return make_result(std::move(out), {x}, [](Node& n) {
    Node& px = parent(n, 0);
    Matrix mask = (px.value.array() > 0.0).cast<double>();
    px.accumulate(n.grad.cwiseProduct(mask));
  });
}

Var slice_rows(const Var& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows()) {
    throw std::out_of_range("slice_rows: range outside tensor");
  }
  Matrix out = a.value().middleRows(begin, count);
  return make_result(std::move(out), {a}, [begin, count](Node& n) {
    Node& pa = parent(n, 0);
    Matrix g = Matrix::Zero(pa.value.rows(), pa.value.cols());
    g.middleRows(begin, count) = n.grad;
    pa.accumulate(g);
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> offsets;
  offsets.reserve(parts.size());
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  std::vector<Var> parents(parts.begin(), parts.end());
  return make_result(std::move(out), std::move(parents), [offsets](Node& n) {
    for (std::size_t i = 0; i < n.parents.size(); ++i) {
      Node& p = *n.parents[i];
      if (p.requires_grad) p.accumulate(n.grad.middleRows(offsets[i], p.value.rows()));
    }
  });
}

Var gather_rows(const Var& a, std::span<const int> indices) {
  Matrix out(static_cast<Eigen::Index>(indices.size()), a.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= a.rows()) throw std::out_of_range("gather_rows: index");
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(indices[i]);
  }
  std::vector<int> idx(indices.begin(), indices.end());
  return make_result(std::move(out), {a}, [idx = std::move(idx)](Node& n) {
    Node& pa = parent(n, 0);
    Matrix g = Matrix::Zero(pa.value.rows(), pa.value.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += n.grad.row(static_cast<Eigen::Index>(i));
    pa.accumulate(g);
  });
}

Var mean_rows(const Var& a) {
  if (a.rows() == 0) throw std::invalid_argument("mean_rows: empty tensor");
  Matrix out = a.value().colwise().mean();
  return make_result(std::move(out), {a}, [](Node& n) {
    Node& pa = parent(n, 0);
    const double inv = 1.0 / static_cast<double>(pa.value.rows());
    pa.accumulate(n.grad.replicate(pa.value.rows(), 1) * inv);
  });
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make_result(std::move(out), {a}, [](Node& n) {
    Node& pa = parent(n, 0);
    pa.accumulate(Matrix::Constant(pa.value.rows(), pa.value.cols(), n.grad(0, 0)));
  });
}

Var sum_scalars(std::span<const Var> terms) {
  Matrix out = Matrix::Zero(1, 1);
  for (const auto& t : terms) {
    if (t.value().size() != 1) throw std::invalid_argument("sum_scalars: non-scalar term");
    out(0, 0) += t.item();
  }
  std::vector<Var> parents(terms.begin(), terms.end());
  return make_result(std::move(out), std::move(parents), [](Node& n) {
    for (auto& p : n.parents) p->accumulate(n.grad);
  });
}

Var cosine(const Var& a, const Var& b, double eps) {
  if (a.rows() != 1 || b.rows() != 1 || a.cols() != b.cols()) {
    throw std::invalid_argument("cosine: expects two 1 x D rows");
  }
  const double na = std::max(a.value().norm(), eps);
  const double nb = std::max(b.value().norm(), eps);
  const double dot = a.value().row(0).dot(b.value().row(0));
  const double c = dot / (na * nb);
  Matrix out(1, 1);
  out(0, 0) = c;
  return make_result(std::move(out), {a, b}, [na, nb, c](Node& n) {
    Node& pa = parent(n, 0);
    Node& pb = parent(n, 1);
    const double g = n.grad(0, 0);
    if (pa.requires_grad) pa.accumulate(g * (pb.value / (na * nb) - c * pa.value / (na * na)));
    if (pb.requires_grad) pb.accumulate(g * (pa.value / (na * nb) - c * pb.value / (nb * nb)));
  });
}

Var cross_entropy(const Var& logits, int target, double label_smoothing) {
  if (logits.rows() != 1) throw std::invalid_argument("cross_entropy: expects a 1 x C row");
  const Eigen::Index classes = logits.cols();
  if (target < 0 || target >= classes) throw std::out_of_range("cross_entropy: class index");
  const auto row = logits.value().row(0);
  const double mx = row.maxCoeff();
  RowVector shifted = row.array() - mx;
  const double lse = std::log(shifted.array().exp().sum());
  RowVector log_p = shifted.array() - lse;
  RowVector t = RowVector::Constant(classes, label_smoothing / static_cast<double>(classes));
  t(target) += 1.0 - label_smoothing;
  Matrix out(1, 1);
  out(0, 0) = -(t.cwiseProduct(log_p)).sum();
  return make_result(std::move(out), {logits}, [log_p, t](Node& n) {
    Matrix g = (log_p.array().exp() - t.array()) * n.grad(0, 0);
    parent(n, 0).accumulate(g);
  });
}

Var attention(const Var& q, const Var& k, const Var& v, int heads, Matrix* weights_out) {
  const Eigen::Index d = q.cols();
  if (k.cols() != d || v.cols() != d || k.rows() != v.rows()) {
    throw std::invalid_argument("attention: shape mismatch");
  }
  if (heads < 1 || d % heads != 0) throw std::invalid_argument("attention: D not divisible by heads");
  const Eigen::Index dh = d / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Eigen::Index tq = q.rows();
  const Eigen::Index tk = k.rows();

  std::vector<Matrix> probs(static_cast<std::size_t>(heads));
  Matrix out(tq, d);
  if (weights_out) *weights_out = Matrix::Zero(tq, tk);
  for (int h = 0; h < heads; ++h) {
    const auto qh = q.value().middleCols(h * dh, dh);
    const auto kh = k.value().middleCols(h * dh, dh);
    const auto vh = v.value().middleCols(h * dh, dh);
    Matrix s = (qh * kh.transpose()) * inv_scale;
    for (Eigen::Index r = 0; r < tq; ++r) {
      const double mx = s.row(r).maxCoeff();
      s.row(r) = (s.row(r).array() - mx).exp();
      s.row(r) /= s.row(r).sum();
    }
    out.middleCols(h * dh, dh) = s * vh;
    if (weights_out) *weights_out += s / static_cast<double>(heads);
    probs[static_cast<std::size_t>(h)] = std::move(s);
  }

  return make_result(std::move(out), {q, k, v},
                     [probs = std::move(probs), heads, dh, inv_scale](Node& n) {
    Node& pq = parent(n, 0);
    Node& pk = parent(n, 1);
    Node& pv = parent(n, 2);
    Matrix gq = Matrix::Zero(pq.value.rows(), pq.value.cols());
    Matrix gk = Matrix::Zero(pk.value.rows(), pk.value.cols());
    Matrix gv = Matrix::Zero(pv.value.rows(), pv.value.cols());
    for (int h = 0; h < heads; ++h) {
      const Matrix& a = probs[static_cast<std::size_t>(h)];
      const auto go = n.grad.middleCols(h * dh, dh);
      const auto qh = pq.value.middleCols(h * dh, dh);
      const auto kh = pk.value.middleCols(h * dh, dh);
      const auto vh = pv.value.middleCols(h * dh, dh);
      gv.middleCols(h * dh, dh) += a.transpose() * go;
      Matrix da = go * vh.transpose();
      Eigen::VectorXd dots = da.cwiseProduct(a).rowwise().sum();
      Matrix ds = a.cwiseProduct(da.colwise() - dots) * inv_scale;
      gq.middleCols(h * dh, dh) += ds * kh;
      gk.middleCols(h * dh, dh) += ds.transpose() * qh;
    }
    pq.accumulate(gq);
    pk.accumulate(gk);
    pv.accumulate(gv);
  });
}

Var operator+(const Var& a, const Var& b) { return add(a, b); }
Var operator-(const Var& a, const Var& b) { return sub(a, b); }
Var operator*(double s, const Var& a) { return scale(a, s); }
Var operator*(const Var& a, double s) { return scale(a, s); }

}  // namespace pfd::ag
