#include "pfd/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <stdexcept>

#include "pfd/checkpoint.hpp"

namespace pfd {

namespace {

Rng stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b)};
  return Rng(seq);
}

KeypointTruth truth_of(const SampleRecord& r) { return {r.keypoint_truth, r.occluder_boxes}; }

// SGD with momentum, or Adam with decoupled weight decay.
class Optimizer {
 public:
  Optimizer(const ParamStore& params, const TrainConfig& cfg) : cfg_(cfg) {
    for (const auto& [name, v] : params.entries()) {
      first_.push_back(Matrix::Zero(v.rows(), v.cols()));
      if (cfg.optimizer == "adam") second_.push_back(Matrix::Zero(v.rows(), v.cols()));
    }
  }

  void step(const ParamStore& params, double lr) {
    ++t_;
    std::size_t i = 0;
    for (const auto& [name, v] : params.entries()) {
      ag::Var p = v;
      Matrix g = p.grad().size() != 0 ? p.grad() : Matrix::Zero(p.rows(), p.cols());
      Matrix& m = first_[i];
      if (cfg_.optimizer == "adam") {
        Matrix& s = second_[i];
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
        s = cfg_.beta2 * s + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
        const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
        p.mutable_value() *= 1.0 - lr * cfg_.weight_decay;
        p.mutable_value().array() -=
            lr * (m.array() / c1) / ((s.array() / c2).sqrt() + 1e-8);
      } else {
        g += cfg_.weight_decay * p.value();
        m = cfg_.momentum * m + g;
        p.mutable_value() -= lr * m;
      }
      ++i;
    }
  }

 private:
  TrainConfig cfg_;
  int t_ = 0;
  std::vector<Matrix> first_;
  std::vector<Matrix> second_;
};

}  // namespace

PkSampler::PkSampler(std::vector<int> labels, int identities, int instances, std::uint64_t seed)
    : identities_(identities), instances_(instances), rng_(seed) {
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  for (auto& [id, members] : groups) {
    if (static_cast<int>(members.size()) < instances) {
      throw std::invalid_argument("sampler: identity " + std::to_string(id) + " has " +
                                  std::to_string(members.size()) + " records, batch needs " +
                                  std::to_string(instances));
    }
    ids_.push_back(id);
    members_.push_back(std::move(members));
  }
  if (static_cast<int>(ids_.size()) < identities) {
    throw std::invalid_argument("sampler: batch needs " + std::to_string(identities) +
                                " identities, training split has " + std::to_string(ids_.size()));
  }
}

std::vector<std::size_t> PkSampler::next() {
  std::vector<std::size_t> order(ids_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng_);
  std::vector<std::size_t> batch;
  for (int p = 0; p < identities_; ++p) {
    auto members = members_[order[static_cast<std::size_t>(p)]];
    std::shuffle(members.begin(), members.end(), rng_);
    batch.insert(batch.end(), members.begin(), members.begin() + instances_);
  }
  return batch;
}

HeatmapSet pose_for_record(const SampleRecord& record, const PoseConfig& cfg, double noise,
                           std::uint64_t seed, std::size_t record_index) {
  HeatmapSet hs = synth_heatmaps(truth_of(record), record.image.height, record.image.width, cfg);
  if (noise > 0.0) {
    Rng rng = stream(seed, record_index, 0x77);
    hs = add_pose_noise(hs, noise, rng);
  }
  return hs;
}

AugmentedSample augment_sample(const SampleRecord& record, const PoseConfig& cfg, double noise,
                               Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int h = record.image.height;
  const int w = record.image.width;
  auto obs = oracle_observations(truth_of(record), h, w, cfg);
  Image img = record.image;

  if (unit(rng) < 0.5) {
    Image flipped(h, w, img.channels);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < img.channels; ++c) flipped.at(y, x, c) = img.at(y, w - 1 - x, c);
      }
    }
    img = std::move(flipped);
    for (auto& p : obs) p.x = std::clamp(1.0 - p.x, 0.0, 0.999999);
  }

  const int pad = std::max(1, w / 16);
  std::uniform_int_distribution<int> offset(-pad, pad);
  const int dx = offset(rng);
  const int dy = offset(rng);
  Image shifted(h, w, img.channels);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int sy = y + dy;
      const int sx = x + dx;
      if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
      for (int c = 0; c < img.channels; ++c) shifted.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  img = std::move(shifted);
  for (auto& p : obs) {
    p.x = std::clamp(p.x - static_cast<double>(dx) / w, 0.0, 0.999999);
    p.y = std::clamp(p.y - static_cast<double>(dy) / h, 0.0, 0.999999);
  }

  if (unit(rng) < 0.5) {
    const double area = (0.02 + 0.18 * unit(rng)) * h * w;
    const double aspect = std::exp(std::log(0.3) + unit(rng) * (std::log(3.3) - std::log(0.3)));
    const int eh = std::clamp(static_cast<int>(std::round(std::sqrt(area * aspect))), 1, h);
    const int ew = std::clamp(static_cast<int>(std::round(std::sqrt(area / aspect))), 1, w);
    std::uniform_int_distribution<int> ey(0, h - eh);
    std::uniform_int_distribution<int> ex(0, w - ew);
    const int y0 = ey(rng);
    const int x0 = ex(rng);
    for (int y = y0; y < y0 + eh; ++y) {
      for (int x = x0; x < x0 + ew; ++x) {
        for (int c = 0; c < img.channels; ++c) img.at(y, x, c) = unit(rng);
      }
    }
  }

  AugmentedSample out{std::move(img), heatmaps_from_observations(obs, h, w, cfg, PoseSource::kOracle)};
  if (noise > 0.0) out.pose = add_pose_noise(out.pose, noise, rng);
  return out;
}

double learning_rate(const TrainConfig& cfg, int step, int total_steps) {
  const double base = cfg.scaled_lr();
  if (cfg.warmup_steps > 0 && step < cfg.warmup_steps) {
    return base * static_cast<double>(step + 1) / cfg.warmup_steps;
  }
  if (cfg.schedule == "constant" || total_steps <= 1) return base;
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return 0.5 * base * (1.0 + std::cos(std::numbers::pi * t));
}

TrainResult train(const RunConfig& cfg_in, const DatasetManifest& data, const TrainOptions& opts) {
  RunConfig cfg = cfg_in;
  const auto train_idx = data.indices(Split::kTrain);
  if (train_idx.empty()) throw std::invalid_argument("train: manifest has no training records");

  std::map<int, int> classes;
  for (std::size_t i : train_idx) classes.emplace(data.entries[i].record.identity_id, 0);
  int next_class = 0;
  for (auto& [id, cls] : classes) cls = next_class++;
  cfg.model.num_classes = next_class;
  cfg.loss.num_classes = next_class;
  cfg.validate();

  std::vector<int> labels;
  for (std::size_t i : train_idx) labels.push_back(classes.at(data.entries[i].record.identity_id));

  const std::uint64_t sampler_seed =
      cfg.train.deterministic ? cfg.seed * 0x9e3779b97f4a7c15ull + 1 : std::random_device{}();
  PkSampler sampler(labels, cfg.train.identities_per_batch, cfg.train.instances_per_identity,
                    sampler_seed);
  Rng aug_rng(cfg.seed * 0x2545f4914f6cdd1dull + 3);

  TrainResult result;
  result.model = std::make_unique<PfdModel>(cfg.model, cfg.seed);
  PfdModel& model = *result.model;
  Optimizer optimizer(model.params(), cfg.train);

  const int batch = cfg.train.batch_size();
  const int steps_per_epoch = std::max(1, static_cast<int>(train_idx.size()) / batch);
  int total_steps = cfg.train.epochs * steps_per_epoch;
  if (cfg.train.max_steps > 0) total_steps = std::min(total_steps, cfg.train.max_steps);

  std::ofstream metrics_log;
  if (opts.out_dir) {
    std::filesystem::create_directories(*opts.out_dir);
    save_run_config(cfg, *opts.out_dir / "config.json");
    metrics_log.open(*opts.out_dir / "metrics.jsonl");
    if (!metrics_log) throw std::runtime_error("cannot open metrics log in " + opts.out_dir->string());
    result.checkpoint = *opts.out_dir / "checkpoint.bin";
  }

  for (int step = 0; step < total_steps; ++step) {
    const int epoch = step / steps_per_epoch;
    const auto picks = sampler.next();
    std::vector<SampleForward> forwards;
    std::vector<int> batch_labels;
    forwards.reserve(picks.size());
    for (std::size_t p : picks) {
      const SampleRecord& rec = data.entries[train_idx[p]].record;
      if (cfg.train.augment) {
        AugmentedSample aug = augment_sample(rec, cfg.model.pose, cfg.train.pose_noise, aug_rng);
        forwards.push_back(model.forward(aug.image, rec.camera_id, aug.pose));
      } else {
        const HeatmapSet pose = pose_for_record(rec, cfg.model.pose, cfg.train.pose_noise, cfg.seed,
                                                train_idx[p]);
        forwards.push_back(model.forward(rec.image, rec.camera_id, pose));
      }
      batch_labels.push_back(labels[p]);
    }
    const BatchLosses losses = batch_losses(model, forwards, batch_labels, cfg.loss);
    const double total = losses.total.item();
    if (!std::isfinite(total)) {
      throw std::runtime_error("non-finite loss at step " + std::to_string(step) +
                               (result.checkpoint ? "; last good checkpoint: " +
                                                        result.checkpoint->string()
                                                  : std::string()));
    }
    model.params().zero_grad();
    ag::backward(losses.total);
    const double lr = learning_rate(cfg.train, step, total_steps);
    optimizer.step(model.params(), lr);

    StepMetrics m{step, epoch, lr, losses.encoder.item(), losses.decoder.item(),
                  losses.push.item(), total};
    result.metrics.push_back(m);
    if (metrics_log) {
      metrics_log << nlohmann::json{{"step", m.step},     {"epoch", m.epoch},
                                    {"lr", m.lr},         {"L_en", m.encoder},
                                    {"L_de", m.decoder},  {"L_p", m.push},
                                    {"L", m.total}}
                         .dump()
                  << '\n';
    }
    if (opts.on_step) opts.on_step(m);

    const bool epoch_end = (step + 1) % steps_per_epoch == 0 || step + 1 == total_steps;
    if (epoch_end && result.checkpoint) save_checkpoint(*result.checkpoint, model, cfg);
  }
  model.params().zero_grad();
  return result;
}

PoseOverrides pose_overrides(const std::vector<LoadedPose>& poses) {
  PoseOverrides out;
  for (const LoadedPose& p : poses) {
    if (!out.emplace(p.image_id, p.heatmaps).second) {
      throw std::invalid_argument("duplicate keypoints for image " + p.image_id);
    }
  }
  return out;
}

DescriptorSet extract_descriptors(const PfdModel& model, const RunConfig& cfg,
                                  const DatasetManifest& data,
                                  const std::vector<std::size_t>& indices,
                                  const PoseOverrides* poses) {
  DescriptorSet set;
  set.descriptors = Matrix(static_cast<Eigen::Index>(indices.size()), descriptor_length(model.config()));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const SampleRecord& rec = data.entries[indices[i]].record;
    const HeatmapSet* external = nullptr;
    if (poses != nullptr) {
      const auto it = poses->find(data.entries[indices[i]].image_id);
      if (it != poses->end()) external = &it->second;
    }
    const HeatmapSet pose =
        external != nullptr
            ? *external
            : pose_for_record(rec, model.config().pose, cfg.train.pose_noise, cfg.seed + 1, indices[i]);
    set.descriptors.row(static_cast<Eigen::Index>(i)) =
        model.describe(rec.image, rec.camera_id, pose).values;
    set.ids.push_back(rec.identity_id);
    set.cams.push_back(rec.camera_id);
  }
  return set;
}

EvalResult evaluate_split(const PfdModel& model, const RunConfig& cfg, const DatasetManifest& data,
                          Split query_split, Split gallery_split, const PoseOverrides* poses) {
  const DescriptorSet q = extract_descriptors(model, cfg, data, data.indices(query_split), poses);
  const DescriptorSet g = query_split == gallery_split
                              ? q
                              : extract_descriptors(model, cfg, data, data.indices(gallery_split), poses);
  return cmc_map(distance_matrix(q.descriptors, g.descriptors), q.ids, g.ids, q.cams, g.cams,
                 cfg.max_rank);
}

EvalResult evaluate(const PfdModel& model, const RunConfig& cfg, const DatasetManifest& data,
                    const PoseOverrides* poses) {
  if (data.indices(Split::kQuery).empty()) {
    return evaluate_split(model, cfg, data, Split::kTrain, Split::kTrain, poses);
  }
  return evaluate_split(model, cfg, data, Split::kQuery, Split::kGallery, poses);
}

}  // namespace pfd
