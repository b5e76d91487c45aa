#include "pfd/recipes.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pfd {

namespace {

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", 100.0 * v);
  return buf;
}

const SweepPoint* point_at(const AblationReport& r, double value) {
  for (const SweepPoint& p : r.points) {
    if (p.value == value) return &p;
  }
  return nullptr;
}

PropertyCheck compare(const std::string& name, const SweepPoint* hi, const SweepPoint* lo) {
  if (hi == nullptr || lo == nullptr) return {name, false, "sweep point missing"};
  return {name, hi->mean_ap >= lo->mean_ap,
          "mAP " + pct(hi->mean_ap) + " vs " + pct(lo->mean_ap)};
}

std::vector<PropertyCheck> gamma_checks(const AblationReport& r) {
  const SweepPoint* zero = point_at(r, 0.0);
  const SweepPoint* best = nullptr;
  for (const SweepPoint& p : r.points) {
    if (p.value > 0.0 && (best == nullptr || p.mean_ap > best->mean_ap)) best = &p;
  }
  return {compare("some gamma > 0 matches or beats gamma = 0", best, zero)};
}

std::vector<PropertyCheck> noise_checks(const AblationReport& r) {
  return {compare("mild pose noise (0.1) matches or beats heavy noise (20)", point_at(r, 0.1),
                  point_at(r, 20.0))};
}

std::vector<PropertyCheck> view_checks(const AblationReport& r) {
  double lo = 1.0;
  double hi = 0.0;
  for (const SweepPoint& p : r.points) {
    lo = std::min(lo, p.mean_ap);
    hi = std::max(hi, p.mean_ap);
  }
  return {compare("17 views match or beat a single view", point_at(r, 17.0), point_at(r, 1.0)),
          {"mAP spread across view counts <= 15 points", hi - lo <= 0.15,
           "spread " + pct(hi - lo)}};
}

std::vector<PropertyCheck> depth_checks(const AblationReport& r) {
  const SweepPoint* best = nullptr;
  for (const SweepPoint& p : r.points) {
    if (p.value >= 1.0 && (best == nullptr || p.mean_ap > best->mean_ap)) best = &p;
  }
  return {compare("a decoder with layers matches or beats no decoder layers", best,
                  point_at(r, 0.0))};
}

}  // namespace

std::vector<PropertyCheck> module_toggle_checks(const AblationReport& report, int max_inversions) {
  if (report.parameter != SweepParameter::kModules || report.points.size() != 6) {
    throw std::invalid_argument("module_toggle_checks: expects the six-row module report");
  }
  const auto& p = report.points;
  const SweepPoint& full = p[5];
  std::vector<PropertyCheck> checks;
  checks.push_back(compare("full >= without PFA (row 4)", &full, &p[3]));
  checks.push_back(compare("full >= without PVM and push loss (row 2)", &full, &p[1]));
  checks.push_back(compare("full >= without push loss (row 5)", &full, &p[4]));
  checks.push_back(compare("full >= encoder-decoder baseline (row 1)", &full, &p[0]));

  bool chain_ok = true;
  std::string detail;
  for (std::size_t s = 0; s < full.per_seed.size(); ++s) {
    int inversions = 0;
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
      if (p[i + 1].per_seed[s].mean_ap < p[i].per_seed[s].mean_ap) ++inversions;
    }
    chain_ok = chain_ok && inversions <= max_inversions;
    if (!detail.empty()) detail += ", ";
    detail += "seed " + std::to_string(full.seeds[s]) + ": " + std::to_string(inversions);
  }
  checks.push_back({"rows 1..6 non-decreasing up to " + std::to_string(max_inversions) +
                        " inversion(s) per seed",
                    chain_ok, "inversions " + detail});
  return checks;
}

RunConfig occluded_benchmark_config(RunConfig base, int steps) {
  base.data.num_identities = 24;
  base.data.num_train_identities = 16;
  base.data.samples_per_identity = 16;
  base.data.queries_per_identity = 4;
  base.data.train_occlusion = {0.4, 0.5, OccluderStyle::kDistractor, {}};
  base.data.query_occlusion = {0.4, 1.0, OccluderStyle::kDistractor, {}};
  base.data.gallery_occlusion = {};
  base.train.augment = false;
  base.train.max_steps = steps;
  const int per_epoch = std::max(1, base.data.num_train_identities * base.data.samples_per_identity /
                                         (base.train.identities_per_batch * base.train.instances_per_identity));
  base.train.epochs = std::max(base.train.epochs, (steps + per_epoch - 1) / per_epoch);
  base.sync();
  return base;
}

const std::vector<ExperimentRecipe>& recipe_registry() {
  static const std::vector<ExperimentRecipe> recipes = {
      {"module-toggles",
       "PFA / PVM / push-loss toggles, six configurations",
       SweepParameter::kModules,
       {},
       {"full model mAP >= each single-module-removed variant",
        "full model mAP >= encoder-decoder baseline",
        "rows 1..6 ordered with at most one adjacent inversion per seed"},
       [](const AblationReport& r) { return module_toggle_checks(r); }},
      {"gamma-sweep",
       "confidence threshold gamma from 0 to 0.7",
       SweepParameter::kGamma,
       {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7},
       {"some gamma > 0 matches or beats gamma = 0"},
       gamma_checks},
      {"pose-noise",
       "Gaussian heatmap noise sigma in {0.1, 1, 10, 20}",
       SweepParameter::kPoseNoise,
       {0.1, 1.0, 10.0, 20.0},
       {"sigma = 0.1 matches or beats sigma = 20"},
       noise_checks},
      {"view-count",
       "number of semantic views in {1, 5, 10, 15, 17, 20}",
       SweepParameter::kNumViews,
       {1.0, 5.0, 10.0, 15.0, 17.0, 20.0},
       {"17 views match or beat one view", "mAP spread across view counts <= 15 points"},
       view_checks},
      {"decoder-depth",
       "decoder layers in {0, 1, 2, 3, 4}",
       SweepParameter::kDecoderLayers,
       {0.0, 1.0, 2.0, 3.0, 4.0},
       {"some decoder depth >= 1 matches or beats depth 0"},
       depth_checks},
  };
  return recipes;
}

const ExperimentRecipe& find_recipe(const std::string& name) {
  for (const ExperimentRecipe& r : recipe_registry()) {
    if (r.name == name) return r;
  }
  std::string known;
  for (const ExperimentRecipe& r : recipe_registry()) known += (known.empty() ? "" : ", ") + r.name;
  throw std::invalid_argument("unknown recipe: " + name + " (known: " + known + ")");
}

std::string render_svg_plot(const AblationReport& report, const std::string& title) {
  constexpr double kW = 480.0;
  constexpr double kH = 300.0;
  constexpr double kLeft = 50.0;
  constexpr double kRight = 20.0;
  constexpr double kTop = 40.0;
  constexpr double kBottom = 50.0;
  const double pw = kW - kLeft - kRight;
  const double ph = kH - kTop - kBottom;
  const std::size_t n = report.points.size();
  auto x_at = [&](std::size_t i) {
    return kLeft + (n == 1 ? pw / 2.0 : pw * static_cast<double>(i) / static_cast<double>(n - 1));
  };
  auto y_at = [&](double v) { return kTop + ph * (1.0 - std::clamp(v, 0.0, 1.0)); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kW / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">" << title
     << "</text>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = t / 4.0;
    os << "<line x1=\"" << kLeft << "\" x2=\"" << kW - kRight << "\" y1=\"" << y_at(v) << "\" y2=\""
       << y_at(v) << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << y_at(v) + 4 << "\" text-anchor=\"end\">"
       << static_cast<int>(100 * v) << "</text>\n";
  }
  for (std::size_t i = 0; i < n; ++i) {
    os << "<text x=\"" << x_at(i) << "\" y=\"" << kH - kBottom + 16
       << "\" text-anchor=\"middle\">" << report.points[i].label << "</text>\n";
  }
  os << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\">"
     << to_string(report.parameter) << "</text>\n";

  auto series = [&](double SweepPoint::*field, const char* color, const char* name, int row) {
    std::string pts;
    for (std::size_t i = 0; i < n; ++i) {
      pts += std::to_string(x_at(i)) + "," + std::to_string(y_at(report.points[i].*field)) + " ";
    }
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"" << pts
       << "\"/>\n";
    for (std::size_t i = 0; i < n; ++i) {
      os << "<circle cx=\"" << x_at(i) << "\" cy=\"" << y_at(report.points[i].*field)
         << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    os << "<text x=\"" << kW - kRight - 60 << "\" y=\"" << kTop + 14 * row << "\" fill=\"" << color
       << "\">" << name << "</text>\n";
  };
  series(&SweepPoint::rank1, "#1f77b4", "Rank-1", 0);
  series(&SweepPoint::mean_ap, "#d62728", "mAP", 1);
  os << "</svg>\n";
  return os.str();
}

RecipeReport run_recipe(const std::string& name, const RunConfig& base,
                        const std::filesystem::path& out_dir, const RecipeOptions& opts) {
  const ExperimentRecipe& recipe = find_recipe(name);
  RecipeReport report;
  report.dir = out_dir / "recipes" / recipe.name;
  std::filesystem::create_directories(report.dir);
  save_run_config(base, report.dir / "config.json");

  AblationOptions ab;
  ab.seeds = opts.seeds;
  ab.parallel = opts.parallel;
  ab.progress = opts.progress;
  report.ablation = ablate(base, recipe.parameter, recipe.values, ab);
  report.checks = recipe.check(report.ablation);

  auto write = [&](const char* file, const std::string& text) {
    std::ofstream out(report.dir / file);
    if (!out) throw std::runtime_error("cannot write " + (report.dir / file).string());
    out << text;
  };
  write("table.txt", report.ablation.table());
  write("plot.svg", render_svg_plot(report.ablation, recipe.name + ": " + recipe.description));

  nlohmann::json checks = nlohmann::json::array();
  std::string lines;
  for (const PropertyCheck& c : report.checks) {
    checks.push_back({{"property", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    lines += std::string(c.passed ? "PASS " : "FAIL ") + c.name + " (" + c.detail + ")\n";
  }
  write("properties.txt", lines);
  nlohmann::json full = {{"recipe", recipe.name},
                         {"description", recipe.description},
                         {"expected_properties", recipe.expected_properties},
                         {"config", base},
                         {"results", report.ablation.to_json()},
                         {"checks", checks}};
  write("report.json", full.dump(2) + "\n");
  return report;
}

}  // namespace pfd
