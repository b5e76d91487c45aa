#include "pfd/losses.hpp"

#include <cmath>
#include <limits>
#include <map>

namespace pfd {

namespace {

constexpr double kDistanceFloor = 1e-12;

struct HardTriplet {
  int anchor, positive, negative;
  double d_ap, d_an;
};

// Returns the active (positive-hinge) triplets and the number of valid anchors.
std::pair<std::vector<HardTriplet>, int> mine_batch_hard(const Matrix& x, std::span<const int> labels,
                                                         double margin, double& loss_sum) {
  const Eigen::Index b = x.rows();
  Matrix dist(b, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index j = 0; j < b; ++j) {
      dist(i, j) = std::sqrt(std::max((x.row(i) - x.row(j)).squaredNorm(), kDistanceFloor));
    }
  }
  std::vector<HardTriplet> active;
  int anchors = 0;
  loss_sum = 0.0;
  for (int a = 0; a < static_cast<int>(b); ++a) {
    int pos = -1;
    int neg = -1;
    for (int j = 0; j < static_cast<int>(b); ++j) {
      if (j == a) continue;
      if (labels[static_cast<std::size_t>(j)] == labels[static_cast<std::size_t>(a)]) {
        if (pos < 0 || dist(a, j) > dist(a, pos)) pos = j;
      } else if (neg < 0 || dist(a, j) < dist(a, neg)) {
        neg = j;
      }
    }
    if (pos < 0 || neg < 0) continue;
    ++anchors;
    const double l = dist(a, pos) - dist(a, neg) + margin;
    if (l > 0.0) {
      loss_sum += l;
      active.push_back({a, pos, neg, dist(a, pos), dist(a, neg)});
    }
  }
  return {active, anchors};
}

}  // namespace

ag::Var identity_loss(const ag::Var& logits, int y, double label_smoothing) {
  return ag::cross_entropy(logits, y, label_smoothing);
}

ag::Var identity_loss_batch(const ag::Var& logits, std::span<const int> labels,
                            double label_smoothing) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.rows() || labels.empty()) {
    throw std::invalid_argument("identity_loss_batch: one label per logit row required");
  }
  const Eigen::Index b = logits.rows();
  const Eigen::Index c = logits.cols();
  Matrix grad(b, c);
  double total = 0.0;
  for (Eigen::Index r = 0; r < b; ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= c) throw std::out_of_range("identity_loss_batch: class index");
    const auto row = logits.value().row(r);
    const double mx = row.maxCoeff();
    RowVector log_p = row.array() - mx;
    log_p.array() -= std::log(log_p.array().exp().sum());
    RowVector t = RowVector::Constant(c, label_smoothing / static_cast<double>(c));
    t(y) += 1.0 - label_smoothing;
    total -= t.cwiseProduct(log_p).sum();
    grad.row(r) = (log_p.array().exp() - t.array()) / static_cast<double>(b);
  }
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(b);
  return ag::make_result(std::move(out), {logits}, [grad = std::move(grad)](ag::Node& n) {
    n.parents[0]->accumulate(grad * n.grad(0, 0));
  });
}

std::optional<ag::Var> masked_triplet_loss(const ag::Var& features, std::span<const int> labels,
                                           double margin) {
  if (static_cast<Eigen::Index>(labels.size()) != features.rows()) {
    throw std::invalid_argument("triplet_loss: one label per feature row required");
  }
  double loss_sum = 0.0;
  auto [active, anchors] = mine_batch_hard(features.value(), labels, margin, loss_sum);
  if (anchors == 0) return std::nullopt;
  Matrix out(1, 1);
  out(0, 0) = loss_sum / anchors;
  const double inv = 1.0 / anchors;
  return ag::make_result(std::move(out), {features},
                         [active = std::move(active), inv](ag::Node& n) {
    ag::Node& p = *n.parents[0];
    Matrix g = Matrix::Zero(p.value.rows(), p.value.cols());
    const double s = n.grad(0, 0) * inv;
    for (const auto& t : active) {
      const RowVector u_ap = (p.value.row(t.anchor) - p.value.row(t.positive)) / t.d_ap;
      const RowVector u_an = (p.value.row(t.anchor) - p.value.row(t.negative)) / t.d_an;
      g.row(t.anchor) += s * (u_ap - u_an);
      g.row(t.positive) -= s * u_ap;
      g.row(t.negative) += s * u_an;
    }
    p.accumulate(g);
  });
}

ag::Var triplet_loss(const ag::Var& features, std::span<const int> labels, double margin) {
  std::map<int, int> counts;
  for (int y : labels) ++counts[y];
  for (const auto& [y, c] : counts) {
    if (c < 2) throw std::invalid_argument("triplet_loss: identity " + std::to_string(y) +
                                           " has a single instance in the batch");
  }
  if (counts.size() < 2) throw std::invalid_argument("triplet_loss: batch needs two identities");
  return *masked_triplet_loss(features, labels, margin);
}

ag::Var push_loss(std::span<const ViewSets> batch) {
  if (batch.empty()) throw std::invalid_argument("push_loss: empty batch");
  std::vector<ag::Var> terms;
  for (const auto& s : batch) {
    if (!s.high.defined() || !s.low.defined() || s.high.rows() == 0 || s.low.rows() == 0) continue;
    terms.push_back(ag::cosine(ag::mean_rows(s.high), ag::mean_rows(s.low)));
  }
  if (terms.empty()) return ag::Var::scalar(0.0);
  return ag::sum_scalars(terms) * (1.0 / static_cast<double>(batch.size()));
}

ClassifierHeads ClassifierHeads::create(ParamStore& store, int dim, int num_classes, Rng& rng) {
  ClassifierHeads h;
  h.global = Linear::create(store, "heads.global", dim, num_classes, rng);
  h.group = Linear::create(store, "heads.group", dim, num_classes, rng);
  h.pose_global = Linear::create(store, "heads.pose_global", dim, num_classes, rng);
  h.view = Linear::create(store, "heads.view", dim, num_classes, rng);
  return h;
}

ag::Var encoder_loss(std::span<const ag::Var> f_gb, std::span<const ag::Var> f_gp,
                     const ClassifierHeads& heads, std::span<const int> labels,
                     const LossConfig& cfg) {
  if (f_gb.size() != labels.size() || f_gp.size() != labels.size()) {
    throw std::invalid_argument("encoder_loss: batch size mismatch");
  }
  const ag::Var global = ag::concat_rows(f_gb);
  const ag::Var id_global = identity_loss_batch(heads.global(global), labels, cfg.label_smoothing);
  const ag::Var tri_global = triplet_loss(global, labels, cfg.triplet_margin);

  const Eigen::Index k = f_gp.front().rows();
  std::vector<ag::Var> id_groups;
  std::vector<ag::Var> tri_groups;
  for (Eigen::Index i = 0; i < k; ++i) {
    std::vector<ag::Var> rows;
    rows.reserve(f_gp.size());
    for (const auto& g : f_gp) rows.push_back(ag::slice_rows(g, i, 1));
    const ag::Var group = ag::concat_rows(rows);
    id_groups.push_back(identity_loss_batch(heads.group(group), labels, cfg.label_smoothing));
    tri_groups.push_back(triplet_loss(group, labels, cfg.triplet_margin));
  }
  return combine_encoder_loss<ag::Var>(id_global, id_groups, tri_global, tri_groups);
}

ag::Var decoder_loss(std::span<const ag::Var> f_ph, std::span<const ag::Var> high,
                     std::span<const std::vector<int>> high_views, const ClassifierHeads& heads,
                     std::span<const int> labels, const LossConfig& cfg) {
  const std::size_t b = labels.size();
  if (f_ph.size() != b || high.size() != b || high_views.size() != b) {
    throw std::invalid_argument("decoder_loss: batch size mismatch");
  }
  const ag::Var pose_global = ag::concat_rows(f_ph);
  const ag::Var id_pose = identity_loss_batch(heads.pose_global(pose_global), labels,
                                              cfg.label_smoothing);
  const ag::Var tri_pose = triplet_loss(pose_global, labels, cfg.triplet_margin);

  std::vector<ag::Var> per_sample;
  int max_view = -1;
  for (std::size_t s = 0; s < b; ++s) {
    if (!high[s].defined() || high[s].rows() == 0) {
      throw std::invalid_argument("decoder_loss: empty F_h (apply the fallback before calling)");
    }
    if (static_cast<Eigen::Index>(high_views[s].size()) != high[s].rows()) {
      throw std::invalid_argument("decoder_loss: view slot list does not match F_h rows");
    }
    std::vector<int> y(static_cast<std::size_t>(high[s].rows()), labels[s]);
    per_sample.push_back(identity_loss_batch(heads.view(high[s]), y, cfg.label_smoothing));
    for (int v : high_views[s]) max_view = std::max(max_view, v);
  }
  const ag::Var id_high = ag::sum_scalars(per_sample) * (1.0 / static_cast<double>(b));

  std::vector<ag::Var> tri_high;
  for (int slot = 0; slot <= max_view; ++slot) {
    std::vector<ag::Var> rows;
    std::vector<int> ys;
    for (std::size_t s = 0; s < b; ++s) {
      const auto& views = high_views[s];
      for (std::size_t r = 0; r < views.size(); ++r) {
        if (views[r] != slot) continue;
        rows.push_back(ag::slice_rows(high[s], static_cast<Eigen::Index>(r), 1));
        ys.push_back(labels[s]);
      }
    }
    if (rows.size() < 2) continue;
    if (auto t = masked_triplet_loss(ag::concat_rows(rows), ys, cfg.triplet_margin)) {
      tri_high.push_back(*t);
    }
  }
  if (tri_high.empty()) tri_high.push_back(ag::Var::scalar(0.0));
  const std::vector<ag::Var> id_terms = {id_high};
  return combine_decoder_loss<ag::Var>(id_pose, id_terms, tri_pose, tri_high);
}

}  // namespace pfd
