#ifndef PFD_PIPELINE_HPP_
#define PFD_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "pfd/config.hpp"
#include "pfd/eval.hpp"
#include "pfd/model.hpp"
#include "pfd/synthgen.hpp"

namespace pfd {

// Identity-balanced P x K sampler: each batch draws `identities` distinct
// identities and `instances` distinct records of each.
class PkSampler {
 public:
  PkSampler(std::vector<int> labels, int identities, int instances, std::uint64_t seed);
  std::vector<std::size_t> next();

 private:
  std::vector<int> ids_;
  std::vector<std::vector<std::size_t>> members_;
  int identities_;
  int instances_;
  Rng rng_;
};

// Heatmaps for a record: oracle estimate, then optional Gaussian noise from a
// per-record stream so results do not depend on visiting order.
HeatmapSet pose_for_record(const SampleRecord& record, const PoseConfig& cfg, double noise,
                           std::uint64_t seed, std::size_t record_index);

struct AugmentedSample {
  Image image;
  HeatmapSet pose;
};

// Training-time flip, pad-and-crop and random erasing. Heatmaps follow the
// geometric transforms; confidences and labels keep their pre-augmentation values.
AugmentedSample augment_sample(const SampleRecord& record, const PoseConfig& cfg, double noise,
                               Rng& rng);

struct StepMetrics {
  int step = 0;
  int epoch = 0;
  double lr = 0.0;
  double encoder = 0.0;
  double decoder = 0.0;
  double push = 0.0;
  double total = 0.0;
};

double learning_rate(const TrainConfig& cfg, int step, int total_steps);

struct TrainOptions {
  // When set: metrics.jsonl, config.json and checkpoint.bin are written here.
  std::optional<std::filesystem::path> out_dir;
  std::function<void(const StepMetrics&)> on_step;
};

struct TrainResult {
  std::unique_ptr<PfdModel> model;
  std::vector<StepMetrics> metrics;
  std::optional<std::filesystem::path> checkpoint;
};

// Throws std::invalid_argument if the sampler cannot compose a batch and
// std::runtime_error on a non-finite loss (the last good checkpoint stays on disk).
TrainResult train(const RunConfig& cfg, const DatasetManifest& data, const TrainOptions& opts = {});

struct DescriptorSet {
  Matrix descriptors;
  std::vector<int> ids;
  std::vector<int> cams;
};

// Externally supplied heatmaps keyed by image id; other records use the oracle.
using PoseOverrides = std::map<std::string, HeatmapSet>;

PoseOverrides pose_overrides(const std::vector<LoadedPose>& poses);

DescriptorSet extract_descriptors(const PfdModel& model, const RunConfig& cfg,
                                  const DatasetManifest& data,
                                  const std::vector<std::size_t>& indices,
                                  const PoseOverrides* poses = nullptr);

// Query/gallery evaluation; falls back to train-vs-train retrieval when the
// manifest has no query split.
EvalResult evaluate(const PfdModel& model, const RunConfig& cfg, const DatasetManifest& data,
                    const PoseOverrides* poses = nullptr);
EvalResult evaluate_split(const PfdModel& model, const RunConfig& cfg, const DatasetManifest& data,
                          Split query_split, Split gallery_split,
                          const PoseOverrides* poses = nullptr);

}  // namespace pfd

#endif  // PFD_PIPELINE_HPP_
