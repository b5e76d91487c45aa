#include "pfd/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace pfd {

ag::Var ParamStore::create(const std::string& name, Matrix init) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  ag::Var v(std::move(init), true);
  index_[name] = entries_.size();
  entries_.emplace_back(name, v);
  return v;
}

ag::Var ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + name);
  return entries_[it->second].second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t total = 0;
  for (const auto& [name, v] : entries_) total += static_cast<std::size_t>(v.value().size());
  return total;
}

void ParamStore::zero_grad() {
  for (auto& [name, v] : entries_) v.zero_grad();
}

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix xavier_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Linear Linear::create(ParamStore& store, const std::string& name, int in, int out, Rng& rng) {
  Linear l;
  l.weight = store.create(name + ".weight", xavier_matrix(in, out, rng));
  l.bias = store.create(name + ".bias", Matrix::Zero(1, out));
  return l;
}

LayerNorm LayerNorm::create(ParamStore& store, const std::string& name, int dim) {
  LayerNorm n;
  n.gamma = store.create(name + ".gamma", Matrix::Ones(1, dim));
  n.beta = store.create(name + ".beta", Matrix::Zero(1, dim));
  return n;
}

MultiHeadAttention MultiHeadAttention::create(ParamStore& store, const std::string& name, int dim,
                                              int heads, Rng& rng) {
  if (heads < 1 || dim % heads != 0) {
    throw std::invalid_argument("embedding dimension must be divisible by the head count");
  }
  MultiHeadAttention m;
  m.q = Linear::create(store, name + ".q", dim, dim, rng);
  m.k = Linear::create(store, name + ".k", dim, dim, rng);
  m.v = Linear::create(store, name + ".v", dim, dim, rng);
  m.out = Linear::create(store, name + ".out", dim, dim, rng);
  m.heads = heads;
  return m;
}

ag::Var MultiHeadAttention::operator()(const ag::Var& query, const ag::Var& key,
                                       const ag::Var& value, Matrix* weights_out) const {
  return out(ag::attention(q(query), k(key), v(value), heads, weights_out));
}

FeedForward FeedForward::create(ParamStore& store, const std::string& name, int dim, int hidden,
                                Rng& rng) {
  FeedForward f;
  f.fc1 = Linear::create(store, name + ".fc1", dim, hidden, rng);
  f.fc2 = Linear::create(store, name + ".fc2", hidden, dim, rng);
  return f;
}

TransformerBlock TransformerBlock::create(ParamStore& store, const std::string& name, int dim,
                                          int heads, Rng& rng) {
  TransformerBlock b;
  b.norm1 = LayerNorm::create(store, name + ".norm1", dim);
  b.attn = MultiHeadAttention::create(store, name + ".attn", dim, heads, rng);
  b.norm2 = LayerNorm::create(store, name + ".norm2", dim);
  b.ffn = FeedForward::create(store, name + ".ffn", dim, 4 * dim, rng);
  return b;
}

ag::Var TransformerBlock::operator()(const ag::Var& x) const {
  ag::Var h = norm1(x);
  ag::Var y = x + attn(h, h, h);
  return y + ffn(norm2(y));
}

}  // namespace pfd
