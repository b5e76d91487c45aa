#include "pfd/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace pfd {

Matrix distance_matrix(const Matrix& queries, const Matrix& gallery) {
  if (queries.cols() != gallery.cols()) {
    throw std::invalid_argument("distance_matrix: descriptor lengths differ");
  }
  auto normalized = [](const Matrix& m, const char* which) {
    Matrix out = m;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const double n = m.row(i).norm();
      if (n == 0.0) {
        throw std::invalid_argument(std::string("distance_matrix: zero-norm ") + which +
                                    " descriptor at row " + std::to_string(i));
      }
      out.row(i) /= n;
    }
    return out;
  };
  const Matrix qn = normalized(queries, "query");
  const Matrix gn = normalized(gallery, "gallery");
  return (1.0 - (qn * gn.transpose()).array()).matrix();
}

EvalResult cmc_map(const Matrix& distances, std::span<const int> query_ids,
                   std::span<const int> gallery_ids, std::span<const int> query_cams,
                   std::span<const int> gallery_cams, int max_rank) {
  const auto q = static_cast<std::size_t>(distances.rows());
  const auto g = static_cast<std::size_t>(distances.cols());
  if (query_ids.size() != q || query_cams.size() != q || gallery_ids.size() != g ||
      gallery_cams.size() != g) {
    throw std::invalid_argument("cmc_map: label arrays do not match the distance matrix");
  }
  if (max_rank < 1) throw std::invalid_argument("cmc_map: max_rank must be >= 1");

  EvalResult result;
  result.cmc.assign(static_cast<std::size_t>(max_rank), 0.0);
  std::vector<std::size_t> order(g);
  for (std::size_t i = 0; i < q; ++i) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return distances(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) <
             distances(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b));
    });
    int rank = 0;
    int hits = 0;
    int first_hit = -1;
    double precision_sum = 0.0;
    for (std::size_t j : order) {
      const bool same_id = gallery_ids[j] == query_ids[i];
      if (same_id && gallery_cams[j] == query_cams[i]) continue;
      ++rank;
      if (same_id) {
        ++hits;
        if (first_hit < 0) first_hit = rank;
        precision_sum += static_cast<double>(hits) / rank;
      }
    }
    if (hits == 0) {
      ++result.skipped_queries;
      continue;
    }
    ++result.evaluated_queries;
    result.average_precisions.push_back(precision_sum / hits);
    for (int k = first_hit; k <= max_rank; ++k) result.cmc[static_cast<std::size_t>(k - 1)] += 1.0;
  }
  if (result.evaluated_queries == 0) {
    throw std::runtime_error("cmc_map: no query has a valid gallery match");
  }
  for (double& c : result.cmc) c /= result.evaluated_queries;
  result.mean_ap = std::accumulate(result.average_precisions.begin(),
                                   result.average_precisions.end(), 0.0) /
                   result.evaluated_queries;
  return result;
}

std::string format_summary(const EvalResult& r) {
  auto at = [&](int k) {
    return 100.0 * r.cmc[static_cast<std::size_t>(std::min<int>(k, static_cast<int>(r.cmc.size())) - 1)];
  };
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%6s %6s %6s %6s\n%6.1f %6.1f %6.1f %6.1f", "R-1", "R-5", "R-10",
                "mAP", at(1), at(5), at(10), 100.0 * r.mean_ap);
  return buf;
}

void write_eval_report(const EvalResult& r, const std::filesystem::path& path) {
  nlohmann::json j = {{"cmc", r.cmc},
                      {"mAP", r.mean_ap},
                      {"average_precisions", r.average_precisions},
                      {"evaluated_queries", r.evaluated_queries},
                      {"skipped_queries", r.skipped_queries}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report: " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace pfd
