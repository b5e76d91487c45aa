#include "pfd/pfa.hpp"

#include <limits>
#include <stdexcept>

namespace pfd {

namespace {

// Cosines closer than this count as equal, so exact ties survive rounding.
constexpr double kTieTolerance = 1e-12;

}  // namespace

int cosine_argmax(const Eigen::Ref<const RowVector>& query, const Matrix& candidates) {
  if (candidates.rows() == 0) throw std::invalid_argument("cosine_argmax: no candidates");
  if (query.size() != candidates.cols()) throw std::invalid_argument("cosine_argmax: width mismatch");
  const double qn = query.norm();
  if (qn == 0.0) return 0;
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < candidates.rows(); ++j) {
    const double cn = candidates.row(j).norm();
    if (cn == 0.0) continue;
    const double score = query.dot(candidates.row(j)) / (qn * cn);
    if (score > best_score + kTieTolerance) {
      best_score = score;
      best = static_cast<int>(j);
    }
  }
  return best;
}

std::vector<int> match_rows(const Matrix& queries, const Matrix& candidates) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(queries.rows()));
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    out.push_back(cosine_argmax(queries.row(i), candidates));
  }
  return out;
}

HeatmapProjection::HeatmapProjection(ParamStore& store, int map_length, int dim, Rng& rng)
    : proj_(Linear::create(store, "pfa.heatmap_proj", map_length, dim, rng)) {}

ag::Var HeatmapProjection::operator()(const HeatmapSet& hs) const {
  if (hs.maps.cols() != proj_.weight.rows()) {
    throw std::invalid_argument("heatmap projection: flattened map length mismatch");
  }
  return proj_(ag::constant(hs.maps));
}

ag::Var pose_gate(const ag::Var& f_gp, const ag::Var& projected) {
  if (f_gp.rows() != projected.rows()) {
    throw std::invalid_argument("pose_gate: keypoint count M must equal group count K");
  }
  return ag::mul(projected, f_gp);
}

PoseGuidedSet match_and_distribute(const ag::Var& gated, const ag::Var& f_gp) {
  PoseGuidedSet out;
  out.gated = gated;
  out.match_index = match_rows(gated.value(), f_gp.value());
  out.aggregated = gated + ag::gather_rows(f_gp, out.match_index);
  return out;
}

}  // namespace pfd
