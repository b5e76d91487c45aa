// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any failure.
//   pfd_acceptance [--only 1,2,...] [--out-dir DIR]

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "pfd/ablation.hpp"
#include "pfd/checkpoint.hpp"
#include "pfd/decoder.hpp"
#include "pfd/encoder.hpp"
#include "pfd/eval.hpp"
#include "pfd/losses.hpp"
#include "pfd/pfa.hpp"
#include "pfd/pipeline.hpp"
#include "pfd/pvm.hpp"
#include "pfd/recipes.hpp"

using namespace pfd;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && passed) detail = "failed: " + what;
    passed = passed && ok;
  }
};

struct Criterion {
  int id;
  std::string name;
  double budget_s;  // 0 = no runtime bound
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome patch_counts() {
  Outcome o;
  long cases = 0;
  for (int h = 1; h <= 64; ++h) {
    for (int w = 1; w <= 64; ++w) {
      for (int p = 1; p <= 16; ++p) {
        for (int s = 1; s <= p; ++s) {
          ++cases;
          if (p > h || p > w) {
            bool threw = false;
            try {
              patch_count(h, w, p, s);
            } catch (const std::invalid_argument&) {
              threw = true;
            }
            o.require(threw, "patch larger than the image must be rejected");
            continue;
          }
          if (patch_count(h, w, p, s) != oracle::enumerate_patches(h, w, p, s)) {
            o.require(false, "H=" + std::to_string(h) + " W=" + std::to_string(w) +
                                 " P=" + std::to_string(p) + " S=" + std::to_string(s));
          }
        }
      }
    }
  }
  o.require(patch_count(256, 128, 16, 16) == 128, "(256,128,16,16) -> 128");
  o.require(patch_count(256, 128, 16, 12) == 210, "(256,128,16,12) -> 210");
  o.require(oracle::enumerate_patches(256, 128, 16, 12) == 210, "enumerated 210");
  if (o.passed) o.detail = std::to_string(cases) + " settings, 128 and 210 reproduced";
  return o;
}

Outcome matching() {
  Outcome o;
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<int> size(1, 8);
  std::uniform_int_distribution<int> dim(1, 6);
  std::uniform_real_distribution<double> factor(0.01, 100.0);
  int ties = 0;
  for (int t = 0; t < 1000; ++t) {
    const int d = dim(rng);
    Matrix q = oracle::random_matrix(size(rng), d, rng);
    Matrix c = oracle::random_matrix(size(rng), d, rng);
    if (t % 3 == 0 && c.rows() > 1) {
      c.row(c.rows() - 1) = factor(rng) * c.row(0);
      ++ties;
    }
    if (t % 5 == 0) q.row(0) = c.row(std::uniform_int_distribution<int>(0, c.rows() - 1)(rng));
    const auto ref = oracle::argmax_cosine(q, c);

    const PoseGuidedSet pfa = match_and_distribute(ag::Var(q), ag::Var(c));
    o.require(pfa.match_index == ref, "PFA match on instance " + std::to_string(t));
    const MatchedViews pvm = match_views(ag::Var(q), ag::Var(c));
    o.require(pvm.view_match_index == ref, "PVM match on instance " + std::to_string(t));
    for (int i = 0; i < q.rows(); ++i) {
      const RowVector sum = q.row(i) + c.row(ref[static_cast<std::size_t>(i)]);
      o.require((pfa.aggregated.value().row(i) - sum).norm() <= 1e-12, "PFA aggregated sum");
      o.require((pvm.features.value().row(i) - sum).norm() <= 1e-12, "PVM matched sum");
    }

    Matrix qs = q;
    qs.row(std::uniform_int_distribution<int>(0, q.rows() - 1)(rng)) *= factor(rng);
    o.require(match_rows(qs, c) == ref, "query row scaling changed the argmax");
    Matrix cs = c;
    const int r = std::uniform_int_distribution<int>(0, c.rows() - 1)(rng);
    cs.row(r) *= factor(rng);
    const auto ref_scaled = oracle::argmax_cosine(q, cs);
    o.require(match_rows(q, cs) == ref_scaled, "candidate row scaling vs brute force");
    o.require(match_views(ag::Var(q), ag::Var(cs)).view_match_index == ref_scaled,
              "PVM after candidate scaling");
  }
  if (o.passed) o.detail = "1000 instances, " + std::to_string(ties) + " with planted ties";
  return o;
}

Outcome gradients() {
  Outcome o;
  double worst = 0.0;
  auto track = [&](double err, const std::string& what) {
    worst = std::max(worst, err);
    o.require(err < 1e-4, what + " relative error " + fmt("%.2e", err));
  };

  std::mt19937_64 g(3001);
  ag::Var h1(oracle::random_matrix(3, 16, g), true);
  ag::Var l1(oracle::random_matrix(2, 16, g), true);
  ag::Var h2(oracle::random_matrix(4, 16, g), true);
  ag::Var l2(oracle::random_matrix(1, 16, g), true);
  auto push = [&] { return push_loss(std::vector<ViewSets>{{h1, l1}, {h2, l2}, {h1, ag::Var()}}); };
  for (ag::Var* v : {&h1, &l1, &h2, &l2}) track(oracle::gradient_check(push, *v), "push loss");

  Rng rng(3002);
  ParamStore store;
  Decoder dec(store, DecoderConfig{4, 1, 2, 16}, rng);
  const ag::Var memory(oracle::random_matrix(9, 16, g));
  const ag::Var readout(oracle::random_matrix(4, 16, g));
  auto dl = [&] { return ag::sum(ag::mul(dec.decode(unweighted_memory(memory)).views, readout)); };
  const auto& cross = dec.layers()[0].cross_attn;
  track(oracle::gradient_check(dl, cross.q.weight), "cross-attention W_q");
  track(oracle::gradient_check(dl, cross.k.weight), "cross-attention W_k");
  track(oracle::gradient_check(dl, cross.v.weight), "cross-attention W_v");

  ParamStore enc_store;
  EncoderConfig ec;
  ec.patch = {8, 4, 1, 2, 2, 16};
  ec.heads = 2;
  ec.layers = 1;
  ec.num_cameras = 1;
  ec.groups = 2;
  Encoder enc(enc_store, ec, rng);
  Image img(8, 4, 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& p : img.pixels) p = u(g);
  const ag::Var enc_readout(oracle::random_matrix(1, 16, g));
  auto el = [&] { return ag::sum(ag::mul(enc.forward(img, 0).f_gb, enc_readout)); };
  track(oracle::gradient_check(el, enc.patch_weight()), "patch projection");

  if (o.passed) o.detail = "worst relative error " + fmt("%.2e", worst);
  return o;
}

Outcome losses() {
  Outcome o;
  LossConfig cfg;
  o.require(cfg.encoder_weight == 0.5 && cfg.decoder_weight == 0.5, "default weights 0.5");
  o.require(std::abs(total_loss(2.0, 4.0, 0.5, cfg) - 3.5) < 1e-12, "(2, 4, 0.5) -> 3.5");
  LossConfig skew = cfg;
  skew.encoder_weight = 0.25;
  skew.decoder_weight = 1.0;
  o.require(std::abs(total_loss(2.0, 4.0, -0.5, skew) - 4.0) < 1e-12, "skewed weights");

  const std::vector<double> id_groups = {1.0, 3.0};
  const std::vector<double> tri_groups = {2.0, 4.0};
  o.require(std::abs(combine_encoder_loss<double>(5.0, id_groups, 6.0, tri_groups) - 16.0) < 1e-12,
            "encoder combination");
  const std::vector<double> id_high = {0.5, 1.0, 1.5};
  const std::vector<double> tri_high = {0.3, 0.0, 0.6};
  o.require(std::abs(combine_decoder_loss<double>(2.0, id_high, 0.2, tri_high) - 3.5) < 1e-12,
            "decoder combination");

  std::mt19937_64 g(4001);
  std::uniform_int_distribution<int> rows(1, 6);
  std::uniform_int_distribution<int> batch(1, 8);
  double lo = 1.0;
  double hi = -1.0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<ViewSets> sets;
    const int b = batch(g);
    for (int s = 0; s < b; ++s) {
      ag::Var high(oracle::random_matrix(rows(g), 8, g));
      ag::Var low = (s + t) % 4 == 0 ? ag::Var() : ag::Var(oracle::random_matrix(rows(g), 8, g));
      if (t % 10 == 0) low = ag::Var(Matrix(-high.value()));
      sets.push_back({high, low});
    }
    const double l = push_loss(sets).item();
    lo = std::min(lo, l);
    hi = std::max(hi, l);
    o.require(l >= -1.0 - 1e-12 && l <= 1.0 + 1e-12, "push loss out of [-1, 1]");
  }

  for (int c : {2, 7, 8, 100, 751}) {
    const double ce = identity_loss(ag::Var(Matrix::Constant(1, c, 0.37)), c / 2).item();
    o.require(std::abs(ce - std::log(static_cast<double>(c))) <= 1e-9,
              "uniform cross-entropy for C=" + std::to_string(c));
  }
  if (o.passed) {
    o.detail = "hand oracles exact; push loss range [" + fmt("%.3f", lo) + ", " + fmt("%.3f", hi) +
               "] over 1000 batches; ln(C) to 1e-9";
  }
  return o;
}

Outcome padding() {
  Outcome o;
  const double gamma = 0.2;
  const std::vector<double> c = {gamma, std::nextafter(gamma, 0.0), std::nextafter(gamma, 1.0), 0.0, 1.0};
  o.require(label_heatmaps(c, gamma) == std::vector<int>{1, 0, 1, 0, 1}, "label at c = gamma");

  RunConfig cfg = RunConfig::defaults();
  const ModelConfig& mc = cfg.model;
  const int expected = mc.encoder.patch.dim * (2 + mc.encoder.groups + mc.decoder.views);
  o.require(descriptor_length(mc) == expected, "descriptor_length formula");
  o.require(expected == 2304, "desk descriptor length 2304");

  PfdModel model(mc, 5);
  const DatasetManifest data = build_dataset(cfg.data);
  const SampleRecord& rec = data.entries[0].record;
  const HeatmapSet base = pose_for_record(rec, mc.pose, 0.0, 5, 0);
  const int nv = mc.decoder.views;

  std::vector<int> seen;
  auto describe = [&](const HeatmapSet& pose) {
    const SampleForward f = model.forward(rec.image, rec.camera_id, pose);
    const RetrievalDescriptor d = model.pack_descriptor(f);
    o.require(d.values.size() == expected, "descriptor length varies");
    o.require(static_cast<int>(d.valid_mask.size()) == nv, "mask length");
    return f.fallback ? 0 : static_cast<int>(f.high.rows());
  };

  HeatmapSet visible = base;
  visible.labels.assign(visible.labels.size(), 1);
  seen.push_back(describe(visible));
  o.require(seen.back() == nv, "fully visible sample should keep all views");

  std::mt19937_64 g(5001);
  int mid = -1;
  for (int attempt = 0; attempt < 64 && mid < 0; ++attempt) {
    HeatmapSet partial = base;
    for (int& l : partial.labels) l = static_cast<int>(g() & 1u);
    const int l = describe(partial);
    if (l > 0 && l < nv) mid = l;
  }
  o.require(mid > 0, "no partially occluded sample with 0 < L < N_v");
  seen.push_back(mid);

  HeatmapSet hidden = base;
  hidden.confidences.assign(hidden.confidences.size(), 0.0);
  hidden.labels.assign(hidden.labels.size(), 0);
  const SampleForward f = model.forward(rec.image, rec.camera_id, hidden);
  o.require(f.fallback, "fully occluded sample should use the fallback");
  describe(hidden);
  seen.push_back(0);
  if (o.passed) {
    o.detail = "length " + std::to_string(expected) + " for L = " + std::to_string(seen[0]) + ", " +
               std::to_string(seen[1]) + ", 0 (fallback)";
  }
  return o;
}

Outcome overfit() {
  Outcome o;
  RunConfig cfg = RunConfig::defaults();
  cfg.data.num_identities = 8;
  cfg.data.num_train_identities = 8;
  cfg.data.samples_per_identity = 16;
  cfg.train.max_steps = 300;
  cfg.train.augment = false;
  cfg.sync();
  const auto& m = cfg.model;
  o.require(m.encoder.patch.dim == 64 && m.encoder.heads == 4 && m.encoder.layers == 4 &&
                m.decoder.layers == 2 && m.encoder.groups == 17 && m.decoder.views == 17 &&
                m.pose.gamma == 0.2,
            "desk configuration");
  const DatasetManifest data = build_dataset(cfg.data);
  const TrainResult trained = train(cfg, data);
  const EvalResult r = evaluate_split(*trained.model, cfg, data, Split::kTrain, Split::kTrain);
  o.require(trained.metrics.size() <= 300, "more than 300 steps");
  o.require(r.rank(1) >= 0.95, "Rank-1 " + fmt("%.3f", r.rank(1)) + " < 0.95");
  o.require(r.mean_ap >= 0.90, "mAP " + fmt("%.3f", r.mean_ap) + " < 0.90");
  o.detail = std::to_string(trained.metrics.size()) + " steps, Rank-1 " + fmt("%.1f", 100 * r.rank(1)) +
             ", mAP " + fmt("%.1f", 100 * r.mean_ap) + (o.passed ? "" : "; " + o.detail);
  return o;
}

Outcome ablation(const fs::path& out_dir) {
  Outcome o;
  const RunConfig cfg = occluded_benchmark_config(RunConfig::defaults());
  AblationOptions opts;
  opts.seeds = {1, 2, 3};
  opts.progress = [](const std::string& line) { std::cerr << "  " << line << "\n"; };
  const AblationReport report = ablate(cfg, SweepParameter::kModules, {}, opts);
  std::cout << report.table();
  fs::create_directories(out_dir);
  std::ofstream(out_dir / "ablation.json") << report.to_json().dump(2) << "\n";
  std::string failed;
  for (const PropertyCheck& c : module_toggle_checks(report, 1)) {
    std::cout << "    " << (c.passed ? "ok   " : "FAIL ") << c.name << " (" << c.detail << ")\n";
    if (!c.passed) failed += (failed.empty() ? "" : "; ") + c.name;
  }
  o.require(failed.empty(), failed);
  if (o.passed) o.detail = "full mAP " + fmt("%.1f", 100 * report.points[5].mean_ap) + " over 3 seeds";
  return o;
}

Outcome retrieval() {
  Outcome o;
  const EvalResult hand = cmc_map(Matrix{{0.1, 0.2, 0.3}}, std::vector<int>{0}, std::vector<int>{1, 0, 2},
                                  std::vector<int>{0}, std::vector<int>{1, 1, 1}, 3);
  o.require(hand.rank(1) == 0.0, "hand case CMC@1");
  o.require(std::abs(hand.mean_ap - 0.5) < 1e-12, "hand case AP");

  std::mt19937_64 g(8001);
  std::uniform_int_distribution<int> size(1, 50);
  std::uniform_int_distribution<int> level(0, 9);
  int instances = 0;
  while (instances < 100) {
    const int q = size(g);
    const int n = size(g);
    const int ids = std::uniform_int_distribution<int>(1, 10)(g);
    std::uniform_int_distribution<int> id(0, ids - 1);
    std::uniform_int_distribution<int> cam(0, 3);
    Matrix d(q, n);
    const bool tied = instances % 2 == 0;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      d.data()[i] = tied ? 0.1 * level(g) : std::uniform_real_distribution<double>(0.0, 2.0)(g);
    }
    std::vector<int> qid(static_cast<std::size_t>(q)), qcam(static_cast<std::size_t>(q));
    std::vector<int> gid(static_cast<std::size_t>(n)), gcam(static_cast<std::size_t>(n));
    for (auto& v : qid) v = id(g);
    for (auto& v : qcam) v = cam(g);
    for (auto& v : gid) v = id(g);
    for (auto& v : gcam) v = cam(g);
    const oracle::Retrieval ref = oracle::cmc_map(d, qid, gid, qcam, gcam, 10);
    if (ref.aps.empty()) continue;
    ++instances;
    const EvalResult r = cmc_map(d, qid, gid, qcam, gcam, 10);
    for (int k = 0; k < 10; ++k) {
      o.require(std::abs(r.cmc[static_cast<std::size_t>(k)] - ref.cmc[static_cast<std::size_t>(k)]) < 1e-12,
                "CMC mismatch");
    }
    o.require(std::abs(r.mean_ap - ref.mean_ap) < 1e-12, "mAP mismatch");
    o.require(r.evaluated_queries == static_cast<int>(ref.aps.size()), "evaluated query count");
  }
  if (o.passed) o.detail = "hand case and 100 random instances (half with tied distances)";
  return o;
}

Outcome determinism(const fs::path& out_dir) {
  Outcome o;
  RunConfig cfg = RunConfig::defaults();
  cfg.data.num_identities = 4;
  cfg.data.num_train_identities = 4;
  cfg.data.samples_per_identity = 8;
  cfg.train.max_steps = 12;
  cfg.train.identities_per_batch = 4;
  cfg.train.instances_per_identity = 2;
  cfg.train.pose_noise = 1.0;
  cfg.train.deterministic = true;
  cfg.sync();
  const DatasetManifest data = build_dataset(cfg.data);
  const fs::path dir = out_dir / "determinism";
  fs::remove_all(dir);
  TrainOptions a_opts;
  a_opts.out_dir = dir / "a";
  const TrainResult a = train(cfg, data, a_opts);
  TrainOptions b_opts;
  b_opts.out_dir = dir / "b";
  const TrainResult b = train(cfg, data, b_opts);
  const std::string log_a = slurp(dir / "a" / "metrics.jsonl");
  o.require(!log_a.empty(), "empty metric log");
  o.require(log_a == slurp(dir / "b" / "metrics.jsonl"), "metric logs differ");

  const fs::path ckpt_path = dir / "saved.bin";
  save_checkpoint(ckpt_path, *a.model, cfg);
  const LoadedCheckpoint loaded = load_checkpoint(ckpt_path);
  std::vector<std::size_t> all(data.entries.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const DescriptorSet x = extract_descriptors(*a.model, cfg, data, all);
  const DescriptorSet y = extract_descriptors(*loaded.model, loaded.config, data, all);
  o.require(x.descriptors.size() == y.descriptors.size(), "descriptor shapes");
  o.require(std::memcmp(x.descriptors.data(), y.descriptors.data(),
                        sizeof(double) * static_cast<std::size_t>(x.descriptors.size())) == 0,
            "descriptors are not bitwise equal after reload");
  const DescriptorSet z = extract_descriptors(*b.model, cfg, data, all);
  o.require(x.descriptors == z.descriptors, "second training run gives different descriptors");
  if (o.passed) {
    o.detail = std::to_string(a.metrics.size()) + " logged steps identical; " +
               std::to_string(all.size()) + " descriptors bitwise equal after reload";
  }
  fs::remove_all(dir);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  std::string out_dir = (fs::temp_directory_path() / "pfd_acceptance").string();
  app.add_option("--only", only, "criteria to run")->delimiter(',')->check(CLI::Range(1, 9));
  app.add_option("--out-dir", out_dir, "scratch directory");
  CLI11_PARSE(app, argc, argv);

  const fs::path out(out_dir);
  const std::vector<Criterion> criteria = {
      {1, "patch count oracle", 10.0, patch_counts},
      {2, "matching oracles", 30.0, matching},
      {3, "gradient checks", 120.0, gradients},
      {4, "loss exactness", 0.0, losses},
      {5, "label and padding invariants", 0.0, padding},
      {6, "end-to-end overfit", 600.0, overfit},
      {7, "ablation directionality", 0.0, [&] { return ablation(out); }},
      {8, "CMC/mAP oracle", 0.0, retrieval},
      {9, "determinism and persistence", 0.0, [&] { return determinism(out); }},
  };

  const std::set<int> selected(only.begin(), only.end());
  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!selected.empty() && selected.count(c.id) == 0) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome r;
    try {
      r = c.run();
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0.0 && secs > c.budget_s) {
      r.passed = false;
      r.detail += "; runtime over " + fmt("%.0f", c.budget_s) + " s";
    }
    if (!r.passed) ++failures;
    std::cout << (r.passed ? "PASS" : "FAIL") << "  criterion " << c.id << "  " << c.name << ": "
              << r.detail << " [" << fmt("%.1f", secs) << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
