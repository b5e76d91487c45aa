#include "pfd/config.hpp"

#include <fstream>
#include <stdexcept>

namespace pfd {

using nlohmann::json;

namespace {

template <class T>
void read_opt(const json& j, const char* key, T& field) {
  if (j.contains(key)) j.at(key).get_to(field);
}

}  // namespace

void ModelConfig::validate() const {
  encoder.patch.validate();
  if (encoder.patch.dim % encoder.heads != 0) {
    throw std::invalid_argument("config: dim must be divisible by encoder heads");
  }
  if (decoder.dim != encoder.patch.dim) throw std::invalid_argument("config: decoder dim mismatch");
  if (decoder.dim % decoder.heads != 0) {
    throw std::invalid_argument("config: dim must be divisible by decoder heads");
  }
  if (encoder.groups > encoder.patch.num_patches()) {
    throw std::invalid_argument("config: group count K exceeds patch count N");
  }
  if (encoder.patch.height % 4 != 0 || encoder.patch.width % 4 != 0) {
    throw std::invalid_argument("config: image dimensions must be divisible by 4");
  }
  if (num_classes < 2) throw std::invalid_argument("config: need at least two classes");
  if (pose.gamma < 0.0 || pose.gamma > 1.0) throw std::invalid_argument("config: gamma outside [0, 1]");
}

double TrainConfig::scaled_lr() const {
  return base_lr * static_cast<double>(batch_size()) / static_cast<double>(reference_batch);
}

RunConfig RunConfig::defaults() {
  RunConfig cfg;
  cfg.sync();
  return cfg;
}

void RunConfig::sync() {
  model.encoder.patch.height = data.render.height;
  model.encoder.patch.width = data.render.width;
  model.encoder.patch.channels = data.render.channels;
  model.encoder.num_cameras = data.render.num_cameras;
  model.decoder.dim = model.encoder.patch.dim;
  model.num_classes = data.num_train_identities;
  loss.num_classes = data.num_train_identities;
}

void RunConfig::validate() const {
  model.validate();
  if (data.num_keypoints != model.encoder.groups) {
    throw std::invalid_argument("config: keypoint count M must equal group count K");
  }
  if (train.identities_per_batch < 2 || train.instances_per_identity < 2) {
    throw std::invalid_argument("config: batches need >= 2 identities with >= 2 instances each");
  }
  if (train.schedule != "cosine" && train.schedule != "constant") {
    throw std::invalid_argument("config: schedule must be 'cosine' or 'constant'");
  }
  if (train.optimizer != "sgd" && train.optimizer != "adam") {
    throw std::invalid_argument("config: optimizer must be 'sgd' or 'adam'");
  }
  if (loss.encoder_weight < 0.0 || loss.decoder_weight < 0.0) {
    throw std::invalid_argument("config: loss weights must be non-negative");
  }
}

void to_json(json& j, const RenderConfig& c) {
  j = {{"height", c.height},         {"width", c.width},
       {"channels", c.channels},     {"num_cameras", c.num_cameras},
       {"shift_jitter", c.shift_jitter}, {"point_jitter", c.point_jitter}};
}
void from_json(const json& j, RenderConfig& c) {
  read_opt(j, "height", c.height);
  read_opt(j, "width", c.width);
  read_opt(j, "channels", c.channels);
  read_opt(j, "num_cameras", c.num_cameras);
  read_opt(j, "shift_jitter", c.shift_jitter);
  read_opt(j, "point_jitter", c.point_jitter);
}

void to_json(json& j, const OcclusionConfig& c) {
  json boxes = json::array();
  for (const auto& b : c.boxes) boxes.push_back({b.x0, b.y0, b.x1, b.y1});
  j = {{"fraction", c.fraction},
       {"probability", c.probability},
       {"style", c.style == OccluderStyle::kDistractor ? "distractor" : "uniform"},
       {"boxes", boxes}};
}
void from_json(const json& j, OcclusionConfig& c) {
  read_opt(j, "fraction", c.fraction);
  read_opt(j, "probability", c.probability);
  if (j.contains("style")) {
    const auto s = j.at("style").get<std::string>();
    if (s == "uniform") {
      c.style = OccluderStyle::kUniform;
    } else if (s == "distractor") {
      c.style = OccluderStyle::kDistractor;
    } else {
      throw std::invalid_argument("unknown occluder style: " + s);
    }
  }
  if (j.contains("boxes")) {
    c.boxes.clear();
    for (const auto& b : j.at("boxes")) {
      c.boxes.push_back({b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                         b.at(3).get<double>()});
    }
  }
}

void to_json(json& j, const DatasetConfig& c) {
  j = {{"num_identities", c.num_identities},
       {"samples_per_identity", c.samples_per_identity},
       {"num_train_identities", c.num_train_identities},
       {"queries_per_identity", c.queries_per_identity},
       {"num_keypoints", c.num_keypoints},
       {"seed", c.seed},
       {"render", c.render},
       {"train_occlusion", c.train_occlusion},
       {"query_occlusion", c.query_occlusion},
       {"gallery_occlusion", c.gallery_occlusion}};
}
void from_json(const json& j, DatasetConfig& c) {
  read_opt(j, "num_identities", c.num_identities);
  read_opt(j, "samples_per_identity", c.samples_per_identity);
  read_opt(j, "num_train_identities", c.num_train_identities);
  read_opt(j, "queries_per_identity", c.queries_per_identity);
  read_opt(j, "num_keypoints", c.num_keypoints);
  read_opt(j, "seed", c.seed);
  read_opt(j, "render", c.render);
  read_opt(j, "train_occlusion", c.train_occlusion);
  read_opt(j, "query_occlusion", c.query_occlusion);
  read_opt(j, "gallery_occlusion", c.gallery_occlusion);
}

void to_json(json& j, const PatchConfig& c) {
  j = {{"height", c.height}, {"width", c.width}, {"channels", c.channels},
       {"patch", c.patch},   {"stride", c.stride}, {"dim", c.dim}};
}
void from_json(const json& j, PatchConfig& c) {
  read_opt(j, "height", c.height);
  read_opt(j, "width", c.width);
  read_opt(j, "channels", c.channels);
  read_opt(j, "patch", c.patch);
  read_opt(j, "stride", c.stride);
  read_opt(j, "dim", c.dim);
}

void to_json(json& j, const EncoderConfig& c) {
  j = {{"patch", c.patch},           {"heads", c.heads},
       {"layers", c.layers},         {"num_cameras", c.num_cameras},
       {"camera_weight", c.camera_weight}, {"groups", c.groups}};
}
void from_json(const json& j, EncoderConfig& c) {
  read_opt(j, "patch", c.patch);
  read_opt(j, "heads", c.heads);
  read_opt(j, "layers", c.layers);
  read_opt(j, "num_cameras", c.num_cameras);
  read_opt(j, "camera_weight", c.camera_weight);
  read_opt(j, "groups", c.groups);
}

void to_json(json& j, const DecoderConfig& c) {
  j = {{"views", c.views}, {"layers", c.layers}, {"heads", c.heads}, {"dim", c.dim}};
}
void from_json(const json& j, DecoderConfig& c) {
  read_opt(j, "views", c.views);
  read_opt(j, "layers", c.layers);
  read_opt(j, "heads", c.heads);
  read_opt(j, "dim", c.dim);
}

void to_json(json& j, const PoseConfig& c) {
  j = {{"gamma", c.gamma}, {"blob_sigma", c.blob_sigma}, {"neighborhood", c.neighborhood}};
}
void from_json(const json& j, PoseConfig& c) {
  read_opt(j, "gamma", c.gamma);
  read_opt(j, "blob_sigma", c.blob_sigma);
  read_opt(j, "neighborhood", c.neighborhood);
}

void to_json(json& j, const ModelConfig& c) {
  j = {{"encoder", c.encoder},   {"decoder", c.decoder},   {"pose", c.pose},
       {"use_pfa", c.use_pfa},   {"use_pvm", c.use_pvm},   {"use_push", c.use_push},
       {"num_classes", c.num_classes}};
}
void from_json(const json& j, ModelConfig& c) {
  read_opt(j, "encoder", c.encoder);
  read_opt(j, "decoder", c.decoder);
  read_opt(j, "pose", c.pose);
  read_opt(j, "use_pfa", c.use_pfa);
  read_opt(j, "use_pvm", c.use_pvm);
  read_opt(j, "use_push", c.use_push);
  read_opt(j, "num_classes", c.num_classes);
}

void to_json(json& j, const LossConfig& c) {
  j = {{"encoder_weight", c.encoder_weight}, {"decoder_weight", c.decoder_weight},
       {"triplet_margin", c.triplet_margin}, {"label_smoothing", c.label_smoothing},
       {"num_classes", c.num_classes}};
}
void from_json(const json& j, LossConfig& c) {
  read_opt(j, "encoder_weight", c.encoder_weight);
  read_opt(j, "decoder_weight", c.decoder_weight);
  read_opt(j, "triplet_margin", c.triplet_margin);
  read_opt(j, "label_smoothing", c.label_smoothing);
  read_opt(j, "num_classes", c.num_classes);
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},
       {"max_steps", c.max_steps},
       {"base_lr", c.base_lr},
       {"reference_batch", c.reference_batch},
       {"schedule", c.schedule},
       {"warmup_steps", c.warmup_steps},
       {"optimizer", c.optimizer},
       {"momentum", c.momentum},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"weight_decay", c.weight_decay},
       {"identities_per_batch", c.identities_per_batch},
       {"instances_per_identity", c.instances_per_identity},
       {"augment", c.augment},
       {"pose_noise", c.pose_noise},
       {"deterministic", c.deterministic}};
}
void from_json(const json& j, TrainConfig& c) {
  read_opt(j, "epochs", c.epochs);
  read_opt(j, "max_steps", c.max_steps);
  read_opt(j, "base_lr", c.base_lr);
  read_opt(j, "reference_batch", c.reference_batch);
  read_opt(j, "schedule", c.schedule);
  read_opt(j, "warmup_steps", c.warmup_steps);
  read_opt(j, "optimizer", c.optimizer);
  read_opt(j, "momentum", c.momentum);
  read_opt(j, "beta1", c.beta1);
  read_opt(j, "beta2", c.beta2);
  read_opt(j, "weight_decay", c.weight_decay);
  read_opt(j, "identities_per_batch", c.identities_per_batch);
  read_opt(j, "instances_per_identity", c.instances_per_identity);
  read_opt(j, "augment", c.augment);
  read_opt(j, "pose_noise", c.pose_noise);
  read_opt(j, "deterministic", c.deterministic);
}

void to_json(json& j, const RunConfig& c) {
  j = {{"data", c.data},   {"model", c.model}, {"loss", c.loss},
       {"train", c.train}, {"seed", c.seed},   {"max_rank", c.max_rank}};
}
void from_json(const json& j, RunConfig& c) {
  read_opt(j, "data", c.data);
  read_opt(j, "model", c.model);
  read_opt(j, "loss", c.loss);
  read_opt(j, "train", c.train);
  read_opt(j, "seed", c.seed);
  read_opt(j, "max_rank", c.max_rank);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config: " + path.string());
  RunConfig cfg = RunConfig::defaults();
  from_json(json::parse(in), cfg);
  cfg.sync();
  cfg.validate();
  return cfg;
}

void save_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config: " + path.string());
  out << json(cfg).dump(2) << '\n';
}

}  // namespace pfd
