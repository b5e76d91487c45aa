#include <doctest.h>

#include <filesystem>

#include "pfd/recipes.hpp"

using namespace pfd;

namespace {

AblationReport module_report(const std::vector<std::vector<double>>& map_by_row_then_seed) {
  AblationReport r;
  r.parameter = SweepParameter::kModules;
  for (std::size_t row = 0; row < map_by_row_then_seed.size(); ++row) {
    SweepPoint p;
    p.label = std::to_string(row + 1);
    p.toggles = module_toggle_rows()[row];
    double sum = 0.0;
    for (std::size_t s = 0; s < map_by_row_then_seed[row].size(); ++s) {
      EvalResult e;
      e.mean_ap = map_by_row_then_seed[row][s];
      p.per_seed.push_back(e);
      p.seeds.push_back(s + 1);
      sum += e.mean_ap;
    }
    p.mean_ap = sum / static_cast<double>(p.per_seed.size());
    r.points.push_back(p);
  }
  return r;
}

bool all_pass(const std::vector<PropertyCheck>& checks) {
  for (const PropertyCheck& c : checks) {
    if (!c.passed) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("registry") {
  CHECK(recipe_registry().size() == 5);
  CHECK(find_recipe("gamma-sweep").values.size() == 8);
  CHECK(find_recipe("pose-noise").values == std::vector<double>{0.1, 1.0, 10.0, 20.0});
  CHECK(find_recipe("view-count").values == std::vector<double>{1, 5, 10, 15, 17, 20});
  CHECK(find_recipe("decoder-depth").values.size() == 5);
  CHECK(find_recipe("module-toggles").parameter == SweepParameter::kModules);
  CHECK_THROWS_AS(find_recipe("table-nine"), std::invalid_argument);
  for (const ExperimentRecipe& r : recipe_registry()) CHECK_FALSE(r.expected_properties.empty());
}

TEST_CASE("module toggle checks") {
  const auto ordered = module_report({{0.1, 0.1}, {0.2, 0.2}, {0.3, 0.3}, {0.4, 0.4}, {0.5, 0.5}, {0.6, 0.6}});
  CHECK(all_pass(module_toggle_checks(ordered)));

  // One inversion per seed (rows 2 -> 3) is tolerated, two are not.
  const auto one = module_report({{0.1}, {0.3}, {0.2}, {0.4}, {0.5}, {0.6}});
  CHECK(all_pass(module_toggle_checks(one)));
  CHECK_FALSE(all_pass(module_toggle_checks(one, 0)));
  const auto two = module_report({{0.2}, {0.1}, {0.3}, {0.25}, {0.5}, {0.6}});
  const auto checks = module_toggle_checks(two);
  CHECK_FALSE(checks.back().passed);
  CHECK(checks[0].passed);

  // Full model below the no-push-loss row.
  const auto weak = module_report({{0.1}, {0.2}, {0.3}, {0.4}, {0.7}, {0.6}});
  CHECK_FALSE(module_toggle_checks(weak)[2].passed);

  AblationReport wrong;
  wrong.parameter = SweepParameter::kGamma;
  CHECK_THROWS_AS(module_toggle_checks(wrong), std::invalid_argument);
}

TEST_CASE("occluded benchmark split") {
  const RunConfig cfg = occluded_benchmark_config(RunConfig::defaults());
  CHECK(cfg.data.query_occlusion.fraction == 0.4);
  CHECK(cfg.data.query_occlusion.probability == 1.0);
  CHECK(cfg.data.num_train_identities < cfg.data.num_identities);
  CHECK(cfg.loss.num_classes == cfg.data.num_train_identities);
  CHECK_FALSE(cfg.train.augment);
  CHECK(cfg.train.max_steps == 1000);
  const RunConfig short_run = occluded_benchmark_config(RunConfig::defaults(), 700);
  CHECK(short_run.train.max_steps == 700);
  CHECK(short_run.train.epochs * 16 >= 700);
}

TEST_CASE("svg plot") {
  AblationReport r;
  r.parameter = SweepParameter::kGamma;
  for (double v : {0.0, 0.5}) {
    SweepPoint p;
    p.label = v == 0.0 ? "0" : "0.5";
    p.value = v;
    p.rank1 = 0.5 + v;
    p.mean_ap = 0.25;
    r.points.push_back(p);
  }
  const std::string svg = render_svg_plot(r, "demo");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("polyline") != std::string::npos);
  CHECK(svg.find(">0.5<") != std::string::npos);
  CHECK(svg.find("gamma") != std::string::npos);
}

TEST_CASE("a recipe writes its report directory") {
  RunConfig cfg = RunConfig::defaults();
  cfg.data.num_identities = 6;
  cfg.data.num_train_identities = 4;
  cfg.data.samples_per_identity = 4;
  cfg.data.queries_per_identity = 1;
  cfg.model.encoder.patch.dim = 8;
  cfg.model.encoder.heads = 2;
  cfg.model.encoder.layers = 1;
  cfg.model.decoder.heads = 2;
  cfg.model.decoder.layers = 1;
  cfg.model.decoder.views = 3;
  cfg.train.max_steps = 1;
  cfg.train.identities_per_batch = 2;
  cfg.train.instances_per_identity = 2;
  cfg.sync();
  const auto dir = std::filesystem::temp_directory_path() / "pfd_test_recipe";
  std::filesystem::remove_all(dir);
  const RecipeReport rep = run_recipe("pose-noise", cfg, dir);
  CHECK(rep.dir == dir / "recipes" / "pose-noise");
  for (const char* f : {"config.json", "table.txt", "report.json", "properties.txt", "plot.svg"}) {
    CHECK(std::filesystem::exists(rep.dir / f));
  }
  CHECK(rep.ablation.points.size() == 4);
  CHECK(rep.checks.size() == 1);
  CHECK(load_run_config(rep.dir / "config.json").model.decoder.views == 3);
  CHECK_THROWS_AS(run_recipe("nope", cfg, dir), std::invalid_argument);
  std::filesystem::remove_all(dir);
}
