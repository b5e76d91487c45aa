#ifndef PFD_NN_HPP_
#define PFD_NN_HPP_

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "pfd/autograd.hpp"

namespace pfd {

using Rng = std::mt19937_64;

// Named parameter registry. Names are module paths ("encoder.block0.attn.q.weight")
// and are the keys used by checkpoints.
class ParamStore {
 public:
  ag::Var create(const std::string& name, Matrix init);
  ag::Var get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::pair<std::string, ag::Var>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();

 private:
  std::vector<std::pair<std::string, ag::Var>> entries_;
  std::map<std::string, std::size_t> index_;
};

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);
Matrix xavier_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng);

struct Linear {
  ag::Var weight;  // in x out
  ag::Var bias;    // 1 x out

  static Linear create(ParamStore& store, const std::string& name, int in, int out, Rng& rng);
  ag::Var operator()(const ag::Var& x) const { return ag::linear(x, weight, bias); }
};

struct LayerNorm {
  ag::Var gamma;
  ag::Var beta;

  static LayerNorm create(ParamStore& store, const std::string& name, int dim);
  ag::Var operator()(const ag::Var& x) const { return ag::layer_norm(x, gamma, beta); }
};

struct MultiHeadAttention {
  Linear q, k, v, out;
  int heads = 1;

  static MultiHeadAttention create(ParamStore& store, const std::string& name, int dim, int heads,
                                   Rng& rng);
  ag::Var operator()(const ag::Var& query, const ag::Var& key, const ag::Var& value,
                     Matrix* weights_out = nullptr) const;
};

struct FeedForward {
  Linear fc1, fc2;

  static FeedForward create(ParamStore& store, const std::string& name, int dim, int hidden,
                            Rng& rng);
  ag::Var operator()(const ag::Var& x) const { return fc2(ag::gelu(fc1(x))); }
};

// Pre-norm self-attention block: x + MHA(LN(x)), then x + FFN(LN(x)).
struct TransformerBlock {
  LayerNorm norm1, norm2;
  MultiHeadAttention attn;
  FeedForward ffn;

  static TransformerBlock create(ParamStore& store, const std::string& name, int dim, int heads,
                                 Rng& rng);
  ag::Var operator()(const ag::Var& x) const;
};

}  // namespace pfd

#endif  // PFD_NN_HPP_
