#ifndef PFD_EVAL_HPP_
#define PFD_EVAL_HPP_

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pfd/autograd.hpp"

namespace pfd {

struct EvalResult {
  std::vector<double> cmc;  // cmc[k-1] = Rank-k accuracy
  double mean_ap = 0.0;
  std::vector<double> average_precisions;  // one per evaluated query
  int evaluated_queries = 0;
  int skipped_queries = 0;

  double rank(int k) const { return cmc.at(static_cast<std::size_t>(k - 1)); }
};

// q x g matrix of 1 - cos(q_i, g_j). Throws on a zero-norm descriptor or
// mismatched descriptor lengths.
Matrix distance_matrix(const Matrix& queries, const Matrix& gallery);

// Standard retrieval protocol: gallery entries sharing both identity and
// camera with the query are dropped, the rest ranked by ascending distance
// (equal distances keep gallery index order). Queries without any valid
// positive are skipped; throws if every query is skipped.
EvalResult cmc_map(const Matrix& distances, std::span<const int> query_ids,
                   std::span<const int> gallery_ids, std::span<const int> query_cams,
                   std::span<const int> gallery_cams, int max_rank = 10);

// "R-1  R-5  R-10  mAP" row in percent.
std::string format_summary(const EvalResult& r);

void write_eval_report(const EvalResult& r, const std::filesystem::path& path);

}  // namespace pfd

#endif  // PFD_EVAL_HPP_
