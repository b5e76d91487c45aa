#ifndef PFD_PVM_HPP_
#define PFD_PVM_HPP_

#include <span>
#include <vector>

#include "pfd/autograd.hpp"
#include "pfd/pfa.hpp"

namespace pfd {

struct MatchedViews {
  ag::Var features;                 // F_v: N_v x D, f_v^i = v_i + S[index[i]]
  std::vector<int> view_match_index;
};

// Split of F_v by the label of each view's matched keypoint. Row order within
// each set follows view order. An empty set has an undefined Var.
struct ConfidenceSplit {
  ag::Var high;                 // F_h: L x D
  ag::Var low;                  // F_l: (N_v - L) x D
  std::vector<int> high_views;  // view indices forming F_h
  std::vector<int> low_views;
  int count_high() const { return static_cast<int>(high_views.size()); }
};

// Many-to-one: several views may pick the same aggregation feature.
MatchedViews match_views(const ag::Var& views, const ag::Var& aggregated);

ConfidenceSplit split_by_confidence(const ag::Var& matched, std::span<const int> view_match_index,
                                    std::span<const int> labels);

}  // namespace pfd

#endif  // PFD_PVM_HPP_
