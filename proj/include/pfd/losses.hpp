#ifndef PFD_LOSSES_HPP_
#define PFD_LOSSES_HPP_

#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "pfd/autograd.hpp"
#include "pfd/nn.hpp"

namespace pfd {

struct LossConfig {
  double encoder_weight = 0.5;
  double decoder_weight = 0.5;
  double triplet_margin = 0.3;
  double label_smoothing = 0.0;
  int num_classes = 8;
};

// Cross-entropy of softmax(logits) at class y; logits is 1 x C.
ag::Var identity_loss(const ag::Var& logits, int y, double label_smoothing = 0.0);

// Mean row-wise cross-entropy of B x C logits.
ag::Var identity_loss_batch(const ag::Var& logits, std::span<const int> labels,
                            double label_smoothing = 0.0);

// Batch-hard triplet loss with Euclidean distance: for each anchor the
// farthest positive and closest negative, hinge(d_ap - d_an + margin),
// averaged over anchors. Throws if any identity occurs only once.
ag::Var triplet_loss(const ag::Var& features, std::span<const int> labels, double margin);

// Same loss, but anchors lacking a positive or a negative are skipped.
// Returns nullopt when no anchor qualifies.
std::optional<ag::Var> masked_triplet_loss(const ag::Var& features, std::span<const int> labels,
                                           double margin);

// One sample's high/low-confidence view sets; an undefined Var marks an empty set.
struct ViewSets {
  ag::Var high;
  ag::Var low;
};

// (1/B) * sum over samples of cos(mean(F_h), mean(F_l)); samples with an
// empty set contribute 0.
ag::Var push_loss(std::span<const ViewSets> batch);

// Classifier heads: one for f_gb, one shared across the K group features, one
// for f_ph and one shared across high-confidence view features.
struct ClassifierHeads {
  Linear global, group, pose_global, view;

  static ClassifierHeads create(ParamStore& store, int dim, int num_classes, Rng& rng);
};

namespace detail {
inline double sum_terms(std::span<const double> t) {
  double s = 0.0;
  for (double v : t) s += v;
  return s;
}
inline ag::Var sum_terms(std::span<const ag::Var> t) { return ag::sum_scalars(t); }

template <class T>
T mean_terms(std::span<const T> t) {
  if (t.empty()) throw std::invalid_argument("averaged loss term list is empty");
  return sum_terms(t) * (1.0 / static_cast<double>(t.size()));
}
}  // namespace detail

// L_id(gb) + mean_i L_id(gp_i) + L_tri(gb) + mean_i L_tri(gp_i).
template <class T>
T combine_encoder_loss(const T& id_global, std::span<const T> id_groups, const T& tri_global,
                       std::span<const T> tri_groups) {
  return id_global + detail::mean_terms(id_groups) + tri_global + detail::mean_terms(tri_groups);
}

// L_id(ph) + mean_i L_id(h_i) + L_tri(ph) + mean_i L_tri(h_i).
template <class T>
T combine_decoder_loss(const T& id_pose, std::span<const T> id_high, const T& tri_pose,
                       std::span<const T> tri_high) {
  return id_pose + detail::mean_terms(id_high) + tri_pose + detail::mean_terms(tri_high);
}

template <class T>
T total_loss(const T& encoder, const T& decoder, const T& push, const LossConfig& cfg) {
  return encoder * cfg.encoder_weight + decoder * cfg.decoder_weight + push;
}

// Encoder objective over a batch: f_gb rows (1 x D each) and f_gp (K x D each).
ag::Var encoder_loss(std::span<const ag::Var> f_gb, std::span<const ag::Var> f_gp,
                     const ClassifierHeads& heads, std::span<const int> labels,
                     const LossConfig& cfg);

// Decoder objective over a batch. `high` holds each sample's F_h and
// `high_views` the view slot of every F_h row. The identity term averages
// within each sample's F_h; the triplet term runs per view slot over the
// samples where that slot is high-confidence.
ag::Var decoder_loss(std::span<const ag::Var> f_ph, std::span<const ag::Var> high,
                     std::span<const std::vector<int>> high_views, const ClassifierHeads& heads,
                     std::span<const int> labels, const LossConfig& cfg);

}  // namespace pfd

#endif  // PFD_LOSSES_HPP_
