#include "pfd/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "pfd/config.hpp"

namespace pfd {

namespace {

// COCO order: nose, eyes, ears, shoulders, elbows, wrists, hips, knees, ankles
// (left before right).
constexpr std::array<Point2, 17> kTemplate = {{
    {0.50, 0.09}, {0.54, 0.07}, {0.46, 0.07}, {0.58, 0.09}, {0.42, 0.09},
    {0.68, 0.22}, {0.32, 0.22}, {0.76, 0.37}, {0.24, 0.37}, {0.80, 0.51},
    {0.20, 0.51}, {0.62, 0.52}, {0.38, 0.52}, {0.63, 0.72}, {0.37, 0.72},
    {0.64, 0.91}, {0.36, 0.91},
}};

constexpr std::array<std::array<int, 2>, 16> kCocoEdges = {{
    {0, 1}, {0, 2}, {1, 3}, {2, 4}, {5, 6}, {5, 7}, {7, 9}, {6, 8},
    {8, 10}, {5, 11}, {6, 12}, {11, 12}, {11, 13}, {13, 15}, {12, 14}, {14, 16},
}};

Rng seeded_rng(std::initializer_list<std::uint64_t> parts) {
  std::vector<std::uint32_t> words;
  for (auto p : parts) {
    words.push_back(static_cast<std::uint32_t>(p & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

double fract(double v) { return v - std::floor(v); }

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax;
  const double dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double qx = ax + t * dx - px;
  const double qy = ay + t * dy - py;
  return std::sqrt(qx * qx + qy * qy);
}

// Convex polygon test; vertices in either winding.
bool inside_convex(double px, double py, const std::vector<Point2>& poly) {
  int sign = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point2& a = poly[i];
    const Point2& b = poly[(i + 1) % poly.size()];
    const double cross = (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
    const int s = cross > 0 ? 1 : (cross < 0 ? -1 : 0);
    if (s == 0) continue;
    if (sign == 0) sign = s;
    if (s != sign) return false;
  }
  return true;
}

void paint(Image& img, int y, int x, const Rgb& color) {
  for (int c = 0; c < img.channels; ++c) img.at(y, x, c) = color[static_cast<std::size_t>(c % 3)];
}

Box random_occluder(double fraction, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Box box;
  if (unit(rng) < 0.6) {
    // Horizontal band across the full width, biased toward the lower body.
    const double lo = std::min(0.3, 1.0 - fraction);
    const double y0 = lo + unit(rng) * (1.0 - fraction - lo);
    box = {0.0, y0, 1.0, y0 + fraction};
  } else if (unit(rng) < 0.5) {
    box = {0.0, 0.0, fraction, 1.0};
  } else {
    box = {1.0 - fraction, 0.0, 1.0, 1.0};
  }
  return box;
}

void fill_occluder(Image& img, const Box& box, OccluderStyle style, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Rgb base = {unit(rng), unit(rng), unit(rng)};
  std::vector<Rgb> stripes;
  if (style == OccluderStyle::kDistractor) {
    for (int i = 0; i < 8; ++i) stripes.push_back({unit(rng), unit(rng), unit(rng)});
  }
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double nx = (x + 0.5) / img.width;
      const double ny = (y + 0.5) / img.height;
      if (!box.contains(nx, ny)) continue;
      if (style == OccluderStyle::kDistractor) {
        paint(img, y, x, stripes[static_cast<std::size_t>((y / 4) % 8)]);
      } else {
        paint(img, y, x, base);
      }
    }
  }
}

}  // namespace

std::vector<std::array<int, 2>> skeleton_edges(int num_keypoints) {
  std::vector<std::array<int, 2>> edges;
  for (const auto& e : kCocoEdges) {
    if (e[0] < num_keypoints && e[1] < num_keypoints) edges.push_back(e);
  }
  return edges;
}

IdentitySpec generate_identity(std::uint64_t seed, int identity_id, int num_keypoints) {
  if (num_keypoints < 1) throw std::invalid_argument("generate_identity: M must be >= 1");
  Rng rng = seeded_rng({seed, static_cast<std::uint64_t>(identity_id), 0x1d});
  std::uniform_real_distribution<double> color(0.05, 0.95);
  std::uniform_real_distribution<double> jitter(-0.03, 0.03);
  IdentitySpec spec;
  spec.identity_id = identity_id;
  for (int i = 0; i < num_keypoints; ++i) {
    spec.part_colors.push_back({color(rng), color(rng), color(rng)});
    Point2 base = kTemplate[static_cast<std::size_t>(i % 17)];
    // Keypoints beyond the template repeat it with a small fixed offset.
    base.x += 0.02 * (i / 17);
    base.y += 0.02 * (i / 17);
    spec.part_geometry.push_back({std::clamp(base.x + jitter(rng), 0.01, 0.99),
                                  std::clamp(base.y + jitter(rng), 0.01, 0.99)});
  }
  return spec;
}

Rgb camera_transform(int camera_id, const Rgb& color) {
  Rgb out{};
  for (int c = 0; c < 3; ++c) {
    const double gain = 0.8 + 0.4 * fract(0.6180339887 * (camera_id + 1) * (c + 1.3));
    const double offset = 0.1 * (fract(0.3819660113 * (camera_id + 2) * (c + 1)) - 0.5);
    out[static_cast<std::size_t>(c)] =
        std::clamp(gain * color[static_cast<std::size_t>(c)] + offset, 0.0, 1.0);
  }
  return out;
}

SampleRecord render_sample(const IdentitySpec& spec, int camera_id, const OcclusionConfig& occlusion,
                           const RenderConfig& render, Rng& rng) {
  if (camera_id < 0 || camera_id >= render.num_cameras) {
    throw std::invalid_argument("render_sample: camera_id out of range");
  }
  if (!(occlusion.fraction >= 0.0 && occlusion.fraction < 1.0)) {
    throw std::invalid_argument("render_sample: occlusion fraction must lie in [0, 1)");
  }
  const int m = static_cast<int>(spec.part_geometry.size());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> shift(-render.shift_jitter, render.shift_jitter);
  std::uniform_real_distribution<double> wobble(-render.point_jitter, render.point_jitter);
  std::normal_distribution<double> noise(0.0, 0.02);

  SampleRecord rec;
  rec.identity_id = spec.identity_id;
  rec.camera_id = camera_id;

  const double sx = shift(rng);
  const double sy = shift(rng);
  const double scale = 0.95 + 0.1 * unit(rng);
  std::vector<Point2> pts(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const Point2& g = spec.part_geometry[static_cast<std::size_t>(i)];
    pts[static_cast<std::size_t>(i)] = {
        std::clamp(0.5 + (g.x - 0.5) * scale + sx + wobble(rng), 0.001, 0.999),
        std::clamp(0.5 + (g.y - 0.5) * scale + sy + wobble(rng), 0.001, 0.999)};
  }

  Image img(render.height, render.width, render.channels);
  const Rgb background = {0.1 + 0.3 * unit(rng), 0.1 + 0.3 * unit(rng), 0.1 + 0.3 * unit(rng)};
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        img.at(y, x, c) = background[static_cast<std::size_t>(c % 3)] + noise(rng);
      }
    }
  }

  const double px_per_unit = render.width / 32.0;
  const double limb_radius = 1.8 * px_per_unit;
  const double joint_radius = 1.6 * px_per_unit;
  const double head_radius = 3.0 * px_per_unit;
  auto to_px = [&](const Point2& p) { return Point2{p.x * img.width, p.y * img.height}; };
  const auto edges = skeleton_edges(m);
  const auto& colors = spec.part_colors;

  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double cx = x + 0.5;
      const double cy = y + 0.5;
      if (m >= 13) {
        std::vector<Point2> torso = {to_px(pts[5]), to_px(pts[6]), to_px(pts[12]), to_px(pts[11])};
        if (inside_convex(cx, cy, torso)) {
          const double top = 0.5 * (torso[0].y + torso[1].y);
          const double bottom = 0.5 * (torso[2].y + torso[3].y);
          const double t = std::clamp((cy - top) / std::max(bottom - top, 1e-9), 0.0, 1.0);
          Rgb mix{};
          for (std::size_t c = 0; c < 3; ++c) {
            const double upper = 0.5 * (colors[5][c] + colors[6][c]);
            const double lower = 0.5 * (colors[11][c] + colors[12][c]);
            mix[c] = (1.0 - t) * upper + t * lower;
          }
          paint(img, y, x, mix);
        }
      }
      for (const auto& e : edges) {
        const Point2 a = to_px(pts[static_cast<std::size_t>(e[0])]);
        const Point2 b = to_px(pts[static_cast<std::size_t>(e[1])]);
        if (segment_distance(cx, cy, a.x, a.y, b.x, b.y) <= limb_radius) {
          paint(img, y, x, colors[static_cast<std::size_t>(e[1])]);
        }
      }
      const Point2 head = to_px(pts[0]);
      if (std::hypot(cx - head.x, cy - head.y) <= head_radius) paint(img, y, x, colors[0]);
      for (int i = 0; i < m; ++i) {
        const Point2 k = to_px(pts[static_cast<std::size_t>(i)]);
        if (std::hypot(cx - k.x, cy - k.y) <= joint_radius) {
          paint(img, y, x, colors[static_cast<std::size_t>(i)]);
        }
      }
    }
  }

  rec.occluder_boxes = occlusion.boxes;
  if (occlusion.fraction > 0.0 && unit(rng) < occlusion.probability) {
    rec.occluder_boxes.push_back(random_occluder(occlusion.fraction, rng));
  }
  for (const Box& box : rec.occluder_boxes) fill_occluder(img, box, occlusion.style, rng);

  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      Rgb px{};
      for (int c = 0; c < 3; ++c) px[static_cast<std::size_t>(c)] = img.at(y, x, c % img.channels);
      const Rgb out = camera_transform(camera_id, px);
      for (int c = 0; c < img.channels; ++c) img.at(y, x, c) = out[static_cast<std::size_t>(c % 3)];
    }
  }
  quantize_8bit(img);
  rec.image = std::move(img);

  for (const Point2& p : pts) {
    bool visible = true;
    for (const Box& box : rec.occluder_boxes) visible = visible && !box.contains(p.x, p.y);
    rec.keypoint_truth.push_back({p.x, p.y, visible});
  }
  return rec;
}

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kQuery: return "query";
    case Split::kGallery: return "gallery";
  }
  return "train";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "query") return Split::kQuery;
  if (s == "gallery") return Split::kGallery;
  throw std::invalid_argument("unknown split: " + s);
}

std::vector<std::size_t> DatasetManifest::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].split == split) out.push_back(i);
  }
  return out;
}

DatasetManifest build_dataset(const DatasetConfig& config) {
  if (config.num_identities < 2) throw std::invalid_argument("build_dataset: need >= 2 identities");
  if (config.samples_per_identity < 2) {
    throw std::invalid_argument("build_dataset: need >= 2 samples per identity");
  }
  if (config.num_train_identities < 0 || config.num_train_identities > config.num_identities) {
    throw std::invalid_argument("build_dataset: num_train_identities out of range");
  }
  const bool has_test = config.num_train_identities < config.num_identities;
  if (has_test) {
    if (config.queries_per_identity < 1 ||
        config.queries_per_identity >= config.samples_per_identity) {
      throw std::invalid_argument("build_dataset: queries_per_identity must leave gallery samples");
    }
    if (config.render.num_cameras < 2) {
      throw std::invalid_argument(
          "build_dataset: cross-camera query/gallery constraint unsatisfiable with one camera");
    }
  }

  DatasetManifest manifest;
  manifest.config = config;
  int next_id = 0;
  for (int id = 0; id < config.num_identities; ++id) {
    const IdentitySpec spec = generate_identity(config.seed, id, config.num_keypoints);
    const bool train = id < config.num_train_identities;
    for (int s = 0; s < config.samples_per_identity; ++s) {
      Rng rng = seeded_rng({config.seed, static_cast<std::uint64_t>(id),
                            static_cast<std::uint64_t>(s), 0x5a});
      const int camera = (s + id) % config.render.num_cameras;
      Split split = Split::kTrain;
      if (!train) split = s < config.queries_per_identity ? Split::kQuery : Split::kGallery;
      const OcclusionConfig& occ = split == Split::kTrain   ? config.train_occlusion
                                   : split == Split::kQuery ? config.query_occlusion
                                                            : config.gallery_occlusion;
      char name[16];
      std::snprintf(name, sizeof(name), "%06d", next_id++);
      manifest.entries.push_back({name, split, render_sample(spec, camera, occ, config.render, rng)});
    }
  }

  for (const auto& q : manifest.entries) {
    if (q.split != Split::kQuery) continue;
    const bool ok = std::any_of(manifest.entries.begin(), manifest.entries.end(), [&](const auto& g) {
      return g.split == Split::kGallery && g.record.identity_id == q.record.identity_id &&
             g.record.camera_id != q.record.camera_id;
    });
    if (!ok) {
      throw std::invalid_argument("build_dataset: query " + q.image_id +
                                  " has no cross-camera gallery match");
    }
  }
  return manifest;
}

void save_dataset(const DatasetManifest& manifest, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  nlohmann::json records = nlohmann::json::array();
  for (const auto& e : manifest.entries) {
    nlohmann::json kps = nlohmann::json::array();
    for (const auto& k : e.record.keypoint_truth) kps.push_back({k.x, k.y, k.visible});
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& b : e.record.occluder_boxes) boxes.push_back({b.x0, b.y0, b.x1, b.y1});
    records.push_back({{"image_id", e.image_id},
                       {"identity", e.record.identity_id},
                       {"camera", e.record.camera_id},
                       {"split", to_string(e.split)},
                       {"keypoints", kps},
                       {"occluders", boxes}});
    write_png(dir / "images" / (e.image_id + ".png"), e.record.image);
  }
  nlohmann::json doc = {{"format", "pfd-synthetic-dataset"},
                        {"version", 1},
                        {"config", manifest.config},
                        {"records", records}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  out << doc.dump(1) << '\n';
}

DatasetManifest load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw std::runtime_error("missing manifest.json in " + dir.string());
  const nlohmann::json doc = nlohmann::json::parse(in);
  if (doc.value("format", "") != "pfd-synthetic-dataset") {
    throw std::runtime_error("not a synthetic dataset manifest: " + dir.string());
  }
  DatasetManifest manifest;
  manifest.config = doc.at("config").get<DatasetConfig>();
  for (const auto& r : doc.at("records")) {
    ManifestEntry e;
    e.image_id = r.at("image_id").get<std::string>();
    e.split = split_from_string(r.at("split").get<std::string>());
    e.record.identity_id = r.at("identity").get<int>();
    e.record.camera_id = r.at("camera").get<int>();
    for (const auto& k : r.at("keypoints")) {
      e.record.keypoint_truth.push_back({k.at(0).get<double>(), k.at(1).get<double>(), k.at(2).get<bool>()});
    }
    for (const auto& b : r.at("occluders")) {
      e.record.occluder_boxes.push_back(
          {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()});
    }
    e.record.image = read_png(dir / "images" / (e.image_id + ".png"));
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

}  // namespace pfd
