#ifndef PFD_CONFIG_HPP_
#define PFD_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "pfd/decoder.hpp"
#include "pfd/encoder.hpp"
#include "pfd/losses.hpp"
#include "pfd/pose.hpp"
#include "pfd/synthgen.hpp"

namespace pfd {

struct ModelConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  PoseConfig pose;
  bool use_pfa = true;
  bool use_pvm = true;
  bool use_push = true;
  int num_classes = 8;

  // Propagates the shared embedding width and checks cross-module constraints.
  void validate() const;
};

struct TrainConfig {
  int epochs = 40;
  // Hard cap on optimizer steps; 0 means epochs * steps_per_epoch.
  int max_steps = 300;
  double base_lr = 0.0012;
  // The base rate is scaled by (batch size / reference_batch).
  int reference_batch = 64;
  std::string schedule = "cosine";
  int warmup_steps = 20;
  // "sgd" (momentum) or "adam".
  std::string optimizer = "adam";
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 1e-4;
  int identities_per_batch = 4;
  int instances_per_identity = 4;
  bool augment = true;
  // Gaussian noise added to heatmaps (training and evaluation); 0 disables.
  double pose_noise = 0.0;
  bool deterministic = true;

  int batch_size() const { return identities_per_batch * instances_per_identity; }
  double scaled_lr() const;
};

struct RunConfig {
  DatasetConfig data;
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;
  std::uint64_t seed = 1;
  int max_rank = 10;

  // Desk-scale defaults; also syncs num_classes with the training identity count.
  static RunConfig defaults();
  void sync();
  void validate() const;
};

void to_json(nlohmann::json& j, const RenderConfig& c);
void from_json(const nlohmann::json& j, RenderConfig& c);
void to_json(nlohmann::json& j, const OcclusionConfig& c);
void from_json(const nlohmann::json& j, OcclusionConfig& c);
void to_json(nlohmann::json& j, const DatasetConfig& c);
void from_json(const nlohmann::json& j, DatasetConfig& c);
void to_json(nlohmann::json& j, const PatchConfig& c);
void from_json(const nlohmann::json& j, PatchConfig& c);
void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);
void to_json(nlohmann::json& j, const DecoderConfig& c);
void from_json(const nlohmann::json& j, DecoderConfig& c);
void to_json(nlohmann::json& j, const PoseConfig& c);
void from_json(const nlohmann::json& j, PoseConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const LossConfig& c);
void from_json(const nlohmann::json& j, LossConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

// Reads a JSON run config; missing keys keep their defaults.
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& cfg, const std::filesystem::path& path);

}  // namespace pfd

#endif  // PFD_CONFIG_HPP_
