#ifndef PFD_PFA_HPP_
#define PFD_PFA_HPP_

#include <vector>

#include "pfd/autograd.hpp"
#include "pfd/nn.hpp"
#include "pfd/pose.hpp"

namespace pfd {

// Index of the candidate row with the highest cosine similarity to `query`.
// Ties (cosines within 1e-12) go to the lowest index. A zero-norm query scores -inf everywhere and so
// returns 0; zero-norm candidates are never selected unless all are zero.
int cosine_argmax(const Eigen::Ref<const RowVector>& query, const Matrix& candidates);

// cosine_argmax for every row of `queries`.
std::vector<int> match_rows(const Matrix& queries, const Matrix& candidates);

struct PoseGuidedSet {
  ag::Var gated;       // P: M x D
  ag::Var aggregated;  // S: M x D, S_i = P_i + f_gp[match_index[i]]
  std::vector<int> match_index;
};

// Fully connected map from a flattened heatmap to the feature dimension.
class HeatmapProjection {
 public:
  HeatmapProjection() = default;
  HeatmapProjection(ParamStore& store, int map_length, int dim, Rng& rng);

  // H'_i = proj(flatten(h_i)); heatmaps carry no gradient.
  ag::Var operator()(const HeatmapSet& hs) const;

  const Linear& layer() const { return proj_; }

 private:
  Linear proj_;
};

// P_i = H'_i (elementwise) f_gp^i. Throws when the row counts differ.
ag::Var pose_gate(const ag::Var& f_gp, const ag::Var& projected);

PoseGuidedSet match_and_distribute(const ag::Var& gated, const ag::Var& f_gp);

}  // namespace pfd

#endif  // PFD_PFA_HPP_
