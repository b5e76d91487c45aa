#ifndef PFD_DECODER_HPP_
#define PFD_DECODER_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "pfd/autograd.hpp"
#include "pfd/encoder.hpp"
#include "pfd/image.hpp"
#include "pfd/nn.hpp"
#include "pfd/pose.hpp"

namespace pfd {

struct DecoderMemory {
  ag::Var f_de;             // (N+1) x D
  RowVector token_weights;  // N+1 scalars, class token first
};

// Channel-mean of the heatmaps sampled bilinearly at every patch centre; the
// class-token weight is the mean of the patch weights.
RowVector pooled_token_weights(const HeatmapSet& hs, const PatchConfig& patch);

// f_de[j] = token_weights[j] * f_en[j]. Throws if the heatmap grid is not
// (H/4, W/4) for the patch config.
DecoderMemory build_memory(const ag::Var& f_en, const HeatmapSet& hs, const PatchConfig& patch);

// Memory with unit weights, used when pose input is disabled.
DecoderMemory unweighted_memory(const ag::Var& f_en);

struct DecoderConfig {
  int views = 17;
  int layers = 2;
  int heads = 4;
  int dim = 64;
};

struct DecoderOutput {
  ag::Var views;                   // v: N_v x D
  std::vector<Matrix> attention;   // per layer, N_v x (N+1), head-averaged
};

struct DecoderLayer {
  LayerNorm norm1, norm2, norm3;
  MultiHeadAttention self_attn;
  MultiHeadAttention cross_attn;
  FeedForward ffn;
};

// Stack of pre-norm decoder layers driven by N_v learnable semantic views Z.
// The view stream starts from Z itself, so a zero-layer decoder returns
// norm(Z). Each layer: view self-attention, cross-attention into the memory with Z
// re-added to the queries, then a feed-forward block.
class Decoder {
 public:
  Decoder() = default;
  Decoder(ParamStore& store, const DecoderConfig& cfg, Rng& rng);

  const DecoderConfig& config() const { return cfg_; }
  ag::Var semantic_views() const { return views_; }
  const std::vector<DecoderLayer>& layers() const { return layers_; }

  DecoderOutput decode(const DecoderMemory& memory) const;

 private:
  DecoderConfig cfg_;
  ag::Var views_;
  std::vector<DecoderLayer> layers_;
  LayerNorm final_norm_;
};

struct AttentionExport {
  std::vector<Image> per_view;  // single-channel, image resolution, values in [0, 1]
  Image fused;
};

// Uses the last layer's attention over patch tokens (class token dropped).
// Each pixel takes the mean attention of the windows covering it; every map
// is rescaled by its maximum.
AttentionExport export_attention(const DecoderOutput& out, const PatchConfig& patch);

// Writes {image_id}_view{i}.png and {image_id}_fused.png as heat overlays on `image`.
void write_attention_overlays(const std::filesystem::path& dir, const std::string& image_id,
                              const Image& image, const AttentionExport& maps);

}  // namespace pfd

#endif  // PFD_DECODER_HPP_
