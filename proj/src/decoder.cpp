#include "pfd/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace pfd {

namespace {

double bilinear(const RowVector& map, int rows, int cols, double u, double v) {
  u = std::clamp(u, 0.0, static_cast<double>(rows - 1));
  v = std::clamp(v, 0.0, static_cast<double>(cols - 1));
  const int r0 = static_cast<int>(std::floor(u));
  const int c0 = static_cast<int>(std::floor(v));
  const int r1 = std::min(r0 + 1, rows - 1);
  const int c1 = std::min(c0 + 1, cols - 1);
  const double fr = u - r0;
  const double fc = v - c0;
  auto at = [&](int r, int c) { return map(r * cols + c); };
  return (1 - fr) * ((1 - fc) * at(r0, c0) + fc * at(r0, c1)) +
         fr * ((1 - fc) * at(r1, c0) + fc * at(r1, c1));
}

Image normalized(Image img) {
  double mx = 0.0;
  for (double v : img.pixels) mx = std::max(mx, v);
  if (mx > 0.0) {
    for (double& v : img.pixels) v /= mx;
  }
  return img;
}

}  // namespace

RowVector pooled_token_weights(const HeatmapSet& hs, const PatchConfig& patch) {
  if (hs.map_height * 4 != patch.height || hs.map_width * 4 != patch.width) {
    throw std::invalid_argument("build_memory: heatmap grid " + std::to_string(hs.map_height) + "x" +
                                std::to_string(hs.map_width) + " does not match image " +
                                std::to_string(patch.height) + "x" + std::to_string(patch.width));
  }
  if (hs.maps.rows() == 0) throw std::invalid_argument("build_memory: empty heatmap set");
  const RowVector pooled = hs.maps.colwise().mean();
  const int rows = patch.grid_rows();
  const int cols = patch.grid_cols();
  RowVector w(rows * cols + 1);
  const double half = 0.5 * patch.patch;
  for (int gr = 0; gr < rows; ++gr) {
    for (int gc = 0; gc < cols; ++gc) {
      // Heatmap cell j covers image pixels [4j, 4j + 4) with centre 4j + 2.
      const double u = (gr * patch.stride + half) / 4.0 - 0.5;
      const double v = (gc * patch.stride + half) / 4.0 - 0.5;
      w(1 + gr * cols + gc) = bilinear(pooled, hs.map_height, hs.map_width, u, v);
    }
  }
  w(0) = w.tail(rows * cols).mean();
  return w;
}

DecoderMemory build_memory(const ag::Var& f_en, const HeatmapSet& hs, const PatchConfig& patch) {
  DecoderMemory mem;
  mem.token_weights = pooled_token_weights(hs, patch);
  if (mem.token_weights.size() != f_en.rows()) {
    throw std::invalid_argument("build_memory: token count mismatch");
  }
  mem.f_de = ag::scale_rows(f_en, mem.token_weights);
  return mem;
}

DecoderMemory unweighted_memory(const ag::Var& f_en) {
  return {f_en, RowVector::Ones(f_en.rows())};
}

Decoder::Decoder(ParamStore& store, const DecoderConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg_.views < 1) throw std::invalid_argument("decoder: need at least one semantic view");
  if (cfg_.layers < 0) throw std::invalid_argument("decoder: negative layer count");
  views_ = store.create("decoder.views", gaussian_matrix(cfg_.views, cfg_.dim, 0.02, rng));
  for (int i = 0; i < cfg_.layers; ++i) {
    const std::string name = "decoder.layer" + std::to_string(i);
    DecoderLayer l;
    l.norm1 = LayerNorm::create(store, name + ".norm1", cfg_.dim);
    l.self_attn = MultiHeadAttention::create(store, name + ".self_attn", cfg_.dim, cfg_.heads, rng);
    l.norm2 = LayerNorm::create(store, name + ".norm2", cfg_.dim);
    l.cross_attn = MultiHeadAttention::create(store, name + ".cross_attn", cfg_.dim, cfg_.heads, rng);
    l.norm3 = LayerNorm::create(store, name + ".norm3", cfg_.dim);
    l.ffn = FeedForward::create(store, name + ".ffn", cfg_.dim, 4 * cfg_.dim, rng);
    layers_.push_back(std::move(l));
  }
  final_norm_ = LayerNorm::create(store, "decoder.norm", cfg_.dim);
}

DecoderOutput Decoder::decode(const DecoderMemory& memory) const {
  if (memory.f_de.cols() != cfg_.dim) throw std::invalid_argument("decode: memory width mismatch");
  DecoderOutput out;
  ag::Var x = views_;
  for (const auto& l : layers_) {
    ag::Var t = l.norm1(x);
    ag::Var q = t + views_;
    x = x + l.self_attn(q, q, t);
    t = l.norm2(x);
    Matrix weights;
    x = x + l.cross_attn(t + views_, memory.f_de, memory.f_de, &weights);
    out.attention.push_back(std::move(weights));
    x = x + l.ffn(l.norm3(x));
  }
  out.views = final_norm_(x);
  require_finite(out.views.value(), "decoder");
  return out;
}

AttentionExport export_attention(const DecoderOutput& out, const PatchConfig& patch) {
  if (out.attention.empty()) throw std::invalid_argument("export_attention: decoder has not run");
  const Matrix& attn = out.attention.back();
  const int rows = patch.grid_rows();
  const int cols = patch.grid_cols();
  if (attn.cols() != rows * cols + 1) throw std::invalid_argument("export_attention: grid mismatch");

  Image coverage(patch.height, patch.width, 1);
  for (int gr = 0; gr < rows; ++gr) {
    for (int gc = 0; gc < cols; ++gc) {
      for (int y = 0; y < patch.patch; ++y) {
        for (int x = 0; x < patch.patch; ++x) {
          coverage.at(gr * patch.stride + y, gc * patch.stride + x, 0) += 1.0;
        }
      }
    }
  }

  AttentionExport result;
  Image fused(patch.height, patch.width, 1);
  for (Eigen::Index view = 0; view < attn.rows(); ++view) {
    Image map(patch.height, patch.width, 1);
    for (int gr = 0; gr < rows; ++gr) {
      for (int gc = 0; gc < cols; ++gc) {
        const double a = attn(view, 1 + gr * cols + gc);
        for (int y = 0; y < patch.patch; ++y) {
          for (int x = 0; x < patch.patch; ++x) {
            map.at(gr * patch.stride + y, gc * patch.stride + x, 0) += a;
          }
        }
      }
    }
    for (std::size_t i = 0; i < map.pixels.size(); ++i) {
      if (coverage.pixels[i] > 0.0) map.pixels[i] /= coverage.pixels[i];
      fused.pixels[i] += map.pixels[i] / static_cast<double>(attn.rows());
    }
    result.per_view.push_back(normalized(std::move(map)));
  }
  result.fused = normalized(std::move(fused));
  return result;
}

void write_attention_overlays(const std::filesystem::path& dir, const std::string& image_id,
                              const Image& image, const AttentionExport& maps) {
  std::filesystem::create_directories(dir);
  auto overlay = [&](const Image& heat) {
    if (heat.height != image.height || heat.width != image.width) {
      throw std::invalid_argument("attention overlay: size mismatch");
    }
    Image out(image.height, image.width, 3);
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) {
        const double h = heat.at(y, x, 0);
        const double heat_rgb[3] = {h, 0.25 * h, 1.0 - h};
        for (int c = 0; c < 3; ++c) {
          out.at(y, x, c) = 0.5 * image.at(y, x, c % image.channels) + 0.5 * heat_rgb[c];
        }
      }
    }
    return out;
  };
  for (std::size_t i = 0; i < maps.per_view.size(); ++i) {
    write_png(dir / (image_id + "_view" + std::to_string(i) + ".png"), overlay(maps.per_view[i]));
  }
  write_png(dir / (image_id + "_fused.png"), overlay(maps.fused));
}

}  // namespace pfd
