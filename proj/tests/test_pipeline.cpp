#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "pfd/checkpoint.hpp"
#include "pfd/pipeline.hpp"

using namespace pfd;

namespace {

RunConfig toy_config() {
  RunConfig cfg = RunConfig::defaults();
  cfg.data.num_identities = 4;
  cfg.data.num_train_identities = 4;
  cfg.data.samples_per_identity = 4;
  cfg.model.encoder.patch.dim = 16;
  cfg.model.encoder.heads = 2;
  cfg.model.encoder.layers = 1;
  cfg.model.decoder.layers = 1;
  cfg.model.decoder.heads = 2;
  cfg.model.decoder.views = 4;
  cfg.train.epochs = 2;
  cfg.train.identities_per_batch = 2;
  cfg.train.instances_per_identity = 2;
  cfg.sync();
  return cfg;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("sampler draws P identities with K distinct instances each") {
  std::vector<int> labels;
  for (int id = 0; id < 6; ++id) {
    for (int s = 0; s < 5; ++s) labels.push_back(id);
  }
  PkSampler sampler(labels, 4, 4, 3);
  for (int t = 0; t < 20; ++t) {
    const auto batch = sampler.next();
    REQUIRE(batch.size() == 16);
    std::map<int, std::set<std::size_t>> per_id;
    for (std::size_t i : batch) per_id[labels[i]].insert(i);
    CHECK(per_id.size() == 4);
    for (const auto& [id, members] : per_id) CHECK(members.size() == 4);
  }
  CHECK_THROWS_AS(PkSampler(labels, 7, 4, 0), std::invalid_argument);
  CHECK_THROWS_AS(PkSampler(labels, 4, 6, 0), std::invalid_argument);
}

TEST_CASE("learning-rate schedule") {
  TrainConfig cfg;
  cfg.warmup_steps = 0;
  CHECK(learning_rate(cfg, 0, 100) == doctest::Approx(cfg.scaled_lr()));
  CHECK(learning_rate(cfg, 50, 100) == doctest::Approx(0.5 * cfg.scaled_lr()));
  CHECK(learning_rate(cfg, 99, 100) < 0.01 * cfg.scaled_lr());
  TrainConfig full_scale;
  full_scale.base_lr = 0.008;
  full_scale.identities_per_batch = 16;
  CHECK(full_scale.batch_size() == 64);
  CHECK(full_scale.scaled_lr() == doctest::Approx(0.008));
  cfg.warmup_steps = 10;
  CHECK(learning_rate(cfg, 0, 100) == doctest::Approx(0.1 * cfg.scaled_lr()));
  cfg.schedule = "constant";
  cfg.warmup_steps = 0;
  CHECK(learning_rate(cfg, 70, 100) == cfg.scaled_lr());
}

TEST_CASE("augmentation keeps shapes and confidences") {
  const RunConfig cfg = toy_config();
  const DatasetManifest data = build_dataset(cfg.data);
  Rng rng(8);
  const SampleRecord& rec = data.entries[0].record;
  const HeatmapSet ref = pose_for_record(rec, cfg.model.pose, 0.0, 1, 0);
  for (int t = 0; t < 10; ++t) {
    const AugmentedSample a = augment_sample(rec, cfg.model.pose, 0.0, rng);
    CHECK(a.image.height == rec.image.height);
    CHECK(a.image.width == rec.image.width);
    CHECK(a.pose.confidences == ref.confidences);
    CHECK(a.pose.labels == ref.labels);
  }
}

TEST_CASE("training writes metrics and a checkpoint, deterministically") {
  const RunConfig cfg = toy_config();
  const DatasetManifest data = build_dataset(cfg.data);
  const auto dir = std::filesystem::temp_directory_path() / "pfd_test_train";
  std::filesystem::remove_all(dir);

  TrainOptions opts;
  opts.out_dir = dir / "a";
  const TrainResult a = train(cfg, data, opts);
  CHECK(a.metrics.size() == 8);  // 16 records / batch 4 = 4 steps per epoch
  REQUIRE(a.checkpoint.has_value());
  CHECK(std::filesystem::exists(*a.checkpoint));
  CHECK(std::filesystem::exists(dir / "a" / "config.json"));
  const std::string log = slurp(dir / "a" / "metrics.jsonl");
  CHECK(std::count(log.begin(), log.end(), '\n') == 8);
  const auto first = nlohmann::json::parse(log.substr(0, log.find('\n')));
  for (const char* key : {"step", "epoch", "lr", "L_en", "L_de", "L_p", "L"}) CHECK(first.contains(key));

  opts.out_dir = dir / "b";
  const TrainResult b = train(cfg, data, opts);
  CHECK(slurp(dir / "b" / "metrics.jsonl") == log);

  const LoadedCheckpoint ckpt = load_checkpoint(*a.checkpoint);
  const SampleRecord& rec = data.entries[3].record;
  const HeatmapSet pose = pose_for_record(rec, cfg.model.pose, 0.0, cfg.seed, 3);
  const RetrievalDescriptor x = a.model->describe(rec.image, rec.camera_id, pose);
  const RetrievalDescriptor y = ckpt.model->describe(rec.image, rec.camera_id, pose);
  CHECK(x.values == y.values);
  CHECK(x.valid_mask == y.valid_mask);
  std::filesystem::remove_all(dir);
}

TEST_CASE("unsatisfiable batches and non-finite losses abort training") {
  RunConfig cfg = toy_config();
  cfg.train.instances_per_identity = 5;
  const DatasetManifest data = build_dataset(cfg.data);
  CHECK_THROWS_AS(train(cfg, data), std::invalid_argument);

  RunConfig wild = toy_config();
  wild.train.optimizer = "sgd";
  wild.train.base_lr = 1e200;
  wild.train.warmup_steps = 0;
  CHECK_THROWS_AS(train(wild, data), std::runtime_error);
}

TEST_CASE("descriptor layout and padding") {
  RunConfig cfg = toy_config();
  PfdModel model(cfg.model, 4);
  CHECK(descriptor_length(cfg.model) == 16 * (2 + 17 + 4));
  ModelConfig desk = RunConfig::defaults().model;
  CHECK(descriptor_length(desk) == 2304);
  desk.encoder.patch.dim = 768;
  CHECK(descriptor_length(desk) == 27648);

  const DatasetManifest data = build_dataset(cfg.data);
  const SampleRecord& rec = data.entries[0].record;
  HeatmapSet pose = pose_for_record(rec, cfg.model.pose, 0.0, 1, 0);
  const SampleForward f = model.forward(rec.image, rec.camera_id, pose);
  const RetrievalDescriptor d = model.pack_descriptor(f);
  CHECK(d.values.head(16) == f.encoder.f_gb.value().row(0));
  CHECK(d.values.segment(16, 16) == f.f_ph.value().row(0));
  CHECK(d.values.segment(32, 16) == f.encoder.f_gp.value().row(0));
  const int valid = static_cast<int>(std::count(d.valid_mask.begin(), d.valid_mask.end(), true));
  CHECK(valid == f.high.rows());
  CHECK(d.values.tail(16 * (4 - valid)).norm() == 0.0);

  for (double& c : pose.confidences) c = 0.0;
  pose.labels.assign(pose.labels.size(), 0);
  const SampleForward hidden = model.forward(rec.image, rec.camera_id, pose);
  CHECK(hidden.fallback);
  const RetrievalDescriptor dh = model.pack_descriptor(hidden);
  CHECK(dh.values.size() == d.values.size());
  CHECK(std::all_of(dh.valid_mask.begin(), dh.valid_mask.end(), [](bool b) { return b; }));
}

TEST_CASE("run config JSON round trip") {
  RunConfig cfg = toy_config();
  cfg.train.pose_noise = 0.5;
  cfg.model.use_pvm = false;
  cfg.data.query_occlusion.style = OccluderStyle::kDistractor;
  const auto path = std::filesystem::temp_directory_path() / "pfd_test_config.json";
  save_run_config(cfg, path);
  const RunConfig back = load_run_config(path);
  CHECK(nlohmann::json(back) == nlohmann::json(cfg));
  std::filesystem::remove(path);
}
