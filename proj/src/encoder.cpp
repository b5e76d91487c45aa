#include "pfd/encoder.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace pfd {

void PatchConfig::validate() const {
  if (height < 1 || width < 1 || channels < 1 || dim < 1) {
    throw std::invalid_argument("patch config: dimensions must be positive");
  }
  if (stride < 1 || stride > patch) {
    throw std::invalid_argument("patch config: need 1 <= stride <= patch");
  }
  if (patch > std::min(height, width)) {
    throw std::invalid_argument("patch config: patch larger than the image");
  }
}

int patch_count(int height, int width, int patch, int stride) {
  PatchConfig cfg;
  cfg.height = height;
  cfg.width = width;
  cfg.patch = patch;
  cfg.stride = stride;
  cfg.validate();
  return cfg.num_patches();
}

Matrix extract_patches(const Image& image, const PatchConfig& cfg) {
  if (image.height != cfg.height || image.width != cfg.width || image.channels != cfg.channels) {
    throw std::invalid_argument("extract_patches: image is " + std::to_string(image.height) + "x" +
                                std::to_string(image.width) + "x" + std::to_string(image.channels) +
                                ", config expects " + std::to_string(cfg.height) + "x" +
                                std::to_string(cfg.width) + "x" + std::to_string(cfg.channels));
  }
  const int rows = cfg.grid_rows();
  const int cols = cfg.grid_cols();
  Matrix out(rows * cols, cfg.patch_length());
  for (int gr = 0; gr < rows; ++gr) {
    for (int gc = 0; gc < cols; ++gc) {
      const int n = gr * cols + gc;
      int k = 0;
      for (int y = 0; y < cfg.patch; ++y) {
        for (int x = 0; x < cfg.patch; ++x) {
          for (int c = 0; c < cfg.channels; ++c) {
            out(n, k++) = image.at(gr * cfg.stride + y, gc * cfg.stride + x, c);
          }
        }
      }
    }
  }
  return out;
}

std::vector<std::pair<int, int>> group_ranges(int n, int k) {
  if (k < 1 || k > n) throw std::invalid_argument("group_ranges: need 1 <= K <= N");
  const int size = n / k;
  std::vector<std::pair<int, int>> ranges;
  for (int i = 0; i < k; ++i) {
    const int begin = i * size;
    ranges.emplace_back(begin, i + 1 == k ? n - begin : size);
  }
  return ranges;
}

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw std::runtime_error(std::string("non-finite activations in ") + what);
}

Encoder::Encoder(ParamStore& store, const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.patch.validate();
  if (cfg_.num_cameras < 1) throw std::invalid_argument("encoder: need at least one camera");
  const int d = cfg_.patch.dim;
  const int tokens = cfg_.patch.num_patches() + 1;
  projection_ = Linear::create(store, "encoder.patch_embed", cfg_.patch.patch_length(), d, rng);
  class_token_ = store.create("encoder.class_token", gaussian_matrix(1, d, 0.02, rng));
  positions_ = store.create("encoder.positions", gaussian_matrix(tokens, d, 0.02, rng));
  for (int c = 0; c < cfg_.num_cameras; ++c) {
    cameras_.push_back(store.create("encoder.camera" + std::to_string(c),
                                    gaussian_matrix(tokens, d, 0.02, rng)));
  }
  for (int i = 0; i < cfg_.layers; ++i) {
    blocks_.push_back(TransformerBlock::create(store, "encoder.block" + std::to_string(i), d,
                                               cfg_.heads, rng));
  }
  final_norm_ = LayerNorm::create(store, "encoder.norm", d);
  group_block_ = TransformerBlock::create(store, "encoder.group_block", d, cfg_.heads, rng);
  group_norm_ = LayerNorm::create(store, "encoder.group_norm", d);
}

ag::Var Encoder::camera_embedding(int camera_id) const {
  if (camera_id < 0 || camera_id >= static_cast<int>(cameras_.size())) {
    throw std::out_of_range("unknown camera_id " + std::to_string(camera_id));
  }
  return cameras_[static_cast<std::size_t>(camera_id)];
}

ag::Var Encoder::embed_patches(const Image& image) const {
  return projection_(ag::constant(extract_patches(image, cfg_.patch)));
}

ag::Var Encoder::assemble_input(const ag::Var& embeddings, int camera_id) const {
  const ag::Var camera = camera_embedding(camera_id);
  if (embeddings.rows() + 1 != positions_.rows()) {
    throw std::invalid_argument("assemble_input: patch count does not match positional table");
  }
  const std::vector<ag::Var> parts = {class_token_, embeddings};
  ag::Var x = ag::concat_rows(parts) + positions_;
  if (cfg_.camera_weight != 0.0) x = x + cfg_.camera_weight * camera;
  return x;
}

ag::Var Encoder::encode(const ag::Var& input) const {
  if (input.rows() != positions_.rows() || input.cols() != cfg_.patch.dim) {
    throw std::invalid_argument("encode: expected (N+1) x D input");
  }
  if (blocks_.empty()) return input;
  ag::Var x = input;
  for (const auto& block : blocks_) x = block(x);
  x = final_norm_(x);
  require_finite(x.value(), "encoder");
  return x;
}

ag::Var Encoder::group_part_features(const ag::Var& f_part, const ag::Var& f_gb, int groups) const {
  const int n = static_cast<int>(f_part.rows());
  if (groups > n) throw std::invalid_argument("group_part_features: K exceeds patch count");
  std::vector<ag::Var> outputs;
  outputs.reserve(static_cast<std::size_t>(groups));
  for (const auto& [begin, count] : group_ranges(n, groups)) {
    const std::vector<ag::Var> seq = {f_gb, ag::slice_rows(f_part, begin, count)};
    ag::Var y = group_norm_(group_block_(ag::concat_rows(seq)));
    outputs.push_back(ag::slice_rows(y, 0, 1));
  }
  ag::Var f_gp = ag::concat_rows(outputs);
  require_finite(f_gp.value(), "group layer");
  return f_gp;
}

EncoderOutput Encoder::forward(const Image& image, int camera_id) const {
  EncoderOutput out;
  out.f_en = encode(assemble_input(embed_patches(image), camera_id));
  out.f_gb = ag::slice_rows(out.f_en, 0, 1);
  out.f_part = ag::slice_rows(out.f_en, 1, out.f_en.rows() - 1);
  out.f_gp = group_part_features(out.f_part, out.f_gb, cfg_.groups);
  return out;
}

}  // namespace pfd
