#include "pfd/model.hpp"

#include <numeric>
#include <stdexcept>

namespace pfd {

int descriptor_length(const ModelConfig& cfg) {
  return cfg.encoder.patch.dim * (2 + cfg.encoder.groups + cfg.decoder.views);
}

PfdModel::PfdModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.decoder.dim = cfg_.encoder.patch.dim;
  cfg_.validate();
  Rng rng(seed);
  encoder_ = Encoder(params_, cfg_.encoder, rng);
  const int map_len = (cfg_.encoder.patch.height / 4) * (cfg_.encoder.patch.width / 4);
  projection_ = HeatmapProjection(params_, map_len, cfg_.encoder.patch.dim, rng);
  decoder_ = Decoder(params_, cfg_.decoder, rng);
  heads_ = ClassifierHeads::create(params_, cfg_.encoder.patch.dim, cfg_.num_classes, rng);
}

SampleForward PfdModel::forward(const Image& image, int camera_id, const HeatmapSet& pose) const {
  if (pose.size() != cfg_.encoder.groups) {
    throw std::invalid_argument("forward: heatmap count M must equal group count K");
  }
  SampleForward f;
  f.encoder = encoder_.forward(image, camera_id);

  if (cfg_.use_pfa) {
    const ag::Var gated = pose_gate(f.encoder.f_gp, projection_(pose));
    PoseGuidedSet pgs = match_and_distribute(gated, f.encoder.f_gp);
    f.aggregated = pgs.aggregated;
    f.pfa_match = std::move(pgs.match_index);
  } else {
    f.aggregated = f.encoder.f_gp;
  }

  const bool uses_pose = cfg_.use_pfa || cfg_.use_pvm;
  f.memory = uses_pose ? build_memory(f.encoder.f_en, pose, cfg_.encoder.patch)
                       : unweighted_memory(f.encoder.f_en);
  f.decoder = decoder_.decode(f.memory);

  std::vector<int> all_views(static_cast<std::size_t>(cfg_.decoder.views));
  std::iota(all_views.begin(), all_views.end(), 0);
  if (cfg_.use_pvm) {
    f.matched = match_views(f.decoder.views, f.aggregated);
    ConfidenceSplit split = split_by_confidence(f.matched.features, f.matched.view_match_index,
                                                pose.labels);
    if (split.count_high() == 0) {
      f.fallback = true;
      f.high = f.matched.features;
      f.high_views = all_views;
    } else {
      f.high = split.high;
      f.low = split.low;
      f.high_views = std::move(split.high_views);
    }
  } else {
    f.matched.features = f.decoder.views;
    f.high = f.decoder.views;
    f.high_views = all_views;
  }
  f.f_ph = ag::mean_rows(f.high);
  return f;
}

RetrievalDescriptor PfdModel::pack_descriptor(const SampleForward& f) const {
  const int d = cfg_.encoder.patch.dim;
  const int k = cfg_.encoder.groups;
  const int nv = cfg_.decoder.views;
  RetrievalDescriptor desc;
  desc.values = RowVector::Zero(descriptor_length(cfg_));
  desc.values.segment(0, d) = f.encoder.f_gb.value().row(0);
  desc.values.segment(d, d) = f.f_ph.value().row(0);
  for (int i = 0; i < k; ++i) desc.values.segment((2 + i) * d, d) = f.encoder.f_gp.value().row(i);
  const Matrix& high = f.high.value();
  for (Eigen::Index i = 0; i < high.rows(); ++i) {
    desc.values.segment((2 + k + i) * d, d) = high.row(i);
  }
  desc.valid_mask.assign(static_cast<std::size_t>(nv), false);
  for (Eigen::Index i = 0; i < high.rows(); ++i) desc.valid_mask[static_cast<std::size_t>(i)] = true;
  return desc;
}

RetrievalDescriptor PfdModel::describe(const Image& image, int camera_id,
                                       const HeatmapSet& pose) const {
  ag::NoGradGuard guard;
  return pack_descriptor(forward(image, camera_id, pose));
}

BatchLosses batch_losses(const PfdModel& model, std::span<const SampleForward> batch,
                         std::span<const int> labels, const LossConfig& cfg) {
  std::vector<ag::Var> f_gb, f_gp, f_ph, high;
  std::vector<std::vector<int>> high_views;
  std::vector<ViewSets> sets;
  for (const auto& f : batch) {
    f_gb.push_back(f.encoder.f_gb);
    f_gp.push_back(f.encoder.f_gp);
    f_ph.push_back(f.f_ph);
    high.push_back(f.high);
    high_views.push_back(f.high_views);
    // Fallback samples have no genuine high/low split and are skipped by the push loss.
    sets.push_back(f.fallback ? ViewSets{} : ViewSets{f.high, f.low});
  }
  BatchLosses out;
  out.encoder = encoder_loss(f_gb, f_gp, model.heads(), labels, cfg);
  out.decoder = decoder_loss(f_ph, high, high_views, model.heads(), labels, cfg);
  out.push = model.config().use_push && model.config().use_pvm ? push_loss(sets)
                                                                : ag::Var::scalar(0.0);
  out.total = total_loss<ag::Var>(out.encoder, out.decoder, out.push, cfg);
  return out;
}

}  // namespace pfd
