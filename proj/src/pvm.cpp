#include "pfd/pvm.hpp"

#include <stdexcept>

namespace pfd {

MatchedViews match_views(const ag::Var& views, const ag::Var& aggregated) {
  MatchedViews out;
  out.view_match_index = match_rows(views.value(), aggregated.value());
  out.features = views + ag::gather_rows(aggregated, out.view_match_index);
  return out;
}

ConfidenceSplit split_by_confidence(const ag::Var& matched, std::span<const int> view_match_index,
                                    std::span<const int> labels) {
  if (static_cast<Eigen::Index>(view_match_index.size()) != matched.rows()) {
    throw std::invalid_argument("split_by_confidence: one match index per view required");
  }
  ConfidenceSplit split;
  for (std::size_t i = 0; i < view_match_index.size(); ++i) {
    const int k = view_match_index[i];
    if (k < 0 || k >= static_cast<int>(labels.size())) {
      throw std::out_of_range("split_by_confidence: match index outside label range");
    }
    (labels[static_cast<std::size_t>(k)] == 1 ? split.high_views : split.low_views)
        .push_back(static_cast<int>(i));
  }
  if (!split.high_views.empty()) split.high = ag::gather_rows(matched, split.high_views);
  if (!split.low_views.empty()) split.low = ag::gather_rows(matched, split.low_views);
  return split;
}

}  // namespace pfd
