#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "layoutdiff/image.hpp"
#include "layoutdiff/layout.hpp"
#include "layoutdiff/nn.hpp"
#include "layoutdiff/saliency.hpp"

namespace layoutdiff {

struct ModelConfig {
  int d_model = 64;
  int n_heads = 4;
  /// Feed-forward width of the layout encoder and decoder.
  int ffn_dim = 128;
  /// Feed-forward width of the image encoder and the balance-factor predictor.
  int img_ffn_dim = 128;
  int enc_layers = 2;
  int dec_layers = 4;
  int img_layers = 2;
  int cgbfp_layers = 1;
  int cgbfp_queries = 4;
  int patch_size = 16;
  int img_h = 96;
  int img_w = 64;
  int n_max = kDefaultMaxElements;
  /// Includes the empty category.
  int n_categories = 4;

  /// Throws ConfigError on inconsistent dimensions.
  void validate() const;
  int feature_dim() const { return n_categories + 4; }
  int grid_h() const { return img_h / patch_size; }
  int grid_w() const { return img_w / patch_size; }
  int patch_count() const { return grid_h() * grid_w(); }
  /// Canvas RGB + saliency.
  int patch_dim() const { return 4 * patch_size * patch_size; }

  bool operator==(const ModelConfig&) const = default;
};

/// "desk" (d_model 64, 96x64 input) or "pku"/"cgl" (the full-size architecture,
/// 384x256 input, patch 32).
ModelConfig model_preset(std::string_view name, int n_categories);

/// Image-side condition of one sample, ready for the network.
struct SampleCondition {
  /// patch_count x patch_dim, values mapped to [-1, 1].
  Mat patches;
  /// Salient boxes (normalized, center convention); may be empty.
  std::vector<Box> boxes;
};

/// Throws ConfigError unless canvas/saliency already have the model resolution.
SampleCondition prepare_condition(const Image& canvas, const SaliencyMap& saliency, const SalientBoxSet& boxes,
                                  const ModelConfig& cfg);

/// A batch of conditions stacked for the network.
struct Conditioning {
  Mat patches;
  /// One row per box in [-1, 1]; samples without boxes contribute one placeholder row.
  Mat boxes;
  std::vector<int> box_counts;

  int batch() const { return static_cast<int>(box_counts.size()); }
  static Conditioning stack(std::span<const SampleCondition* const> samples);
};

/// Intermediate features exposed for inspection and tests.
struct FeatureBundle {
  ag::Var layout;    // F_L: B*n_max x d
  ag::Var image;     // F_I: B*P x d
  ag::Var boxes;     // F_B: sum max(K,1) x d
  ag::Var t_emb;     // B x d
  ag::Segments layout_segs, image_segs, box_segs;
};

struct ForwardOptions {
  /// Replaces the predicted balance factor with a constant.
  std::optional<double> omega_override;
};

/// Noise predictor: layout encoder, ViT-style image encoder, box MLP,
/// query-transformer balance-factor predictor and a decoder whose image
/// cross-attention is scaled by that factor.
class Denoiser {
 public:
  Denoiser(const ModelConfig& cfg, std::uint64_t seed);
  Denoiser(const Denoiser&) = delete;
  Denoiser& operator=(const Denoiser&) = delete;
  Denoiser(Denoiser&&) = default;

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  /// Sinusoidal embedding of each step followed by a two-layer MLP (B x d).
  ag::Var timestep_embedding(ag::Graph& g, std::span<const int> steps) const;
  ag::Var encode_layout(ag::Graph& g, ag::Var x_t, ag::Var t_emb, const ag::Segments& segs) const;
  ag::Var encode_image(ag::Graph& g, const Mat& patches, int batch) const;
  /// `segs` receives the per-sample row ranges of the result.
  ag::Var encode_boxes(ag::Graph& g, const Conditioning& cond, ag::Segments& segs) const;
  /// B x 1, nonnegative.
  ag::Var predict_omega(ag::Graph& g, ag::Var f_image, const ag::Segments& image_segs, ag::Var f_layout,
                        const ag::Segments& layout_segs, ag::Var t_emb) const;
  /// Predicted noise, B*n_max x feature_dim.
  ag::Var decode(ag::Graph& g, const FeatureBundle& f, ag::Var omega) const;

  FeatureBundle encode(ag::Graph& g, const Mat& x_t, std::span<const int> steps, const Conditioning& cond) const;

  struct Output {
    ag::Var eps;
    ag::Var omega;
  };
  Output forward(ag::Graph& g, const Mat& x_t, std::span<const int> steps, const Conditioning& cond,
                 const ForwardOptions& opts = {}) const;

  /// Inference-only convenience (no tape).
  Mat predict_noise(const Mat& x_t, std::span<const int> steps, const Conditioning& cond,
                    const ForwardOptions& opts = {}) const;

 private:
  struct DecoderBlock {
    nn::LayerNorm ln_self, ln_image, ln_box, ln_ffn;
    nn::MultiHeadAttention self_attn, image_attn, box_attn;
    nn::FeedForward ffn;
  };
  struct QueryBlock {
    nn::LayerNorm ln_self, ln_cross, ln_ffn;
    nn::MultiHeadAttention self_attn, cross_attn;
    nn::FeedForward ffn;
  };

  ModelConfig cfg_;
  nn::ParamStore params_;
  Mat image_pos_;

  nn::Linear time_fc1_, time_fc2_;
  nn::Linear layout_in_;
  ag::Parameter* layout_pos_ = nullptr;
  std::vector<nn::EncoderBlock> layout_blocks_;
  nn::LayerNorm layout_norm_;

  nn::Linear patch_embed_;
  std::vector<nn::EncoderBlock> image_blocks_;
  nn::LayerNorm image_norm_;

  nn::Linear box_fc1_, box_fc2_, box_fc3_;
  ag::Parameter* box_null_ = nullptr;

  ag::Parameter* queries_ = nullptr;
  std::vector<QueryBlock> query_blocks_;
  nn::LayerNorm query_norm_;
  nn::Linear omega_head_;

  std::vector<DecoderBlock> decoder_blocks_;
  nn::LayerNorm decoder_norm_;
  nn::Linear noise_head_;
};

/// Fixed 2-D sine/cosine table: first half of the width encodes the patch
/// row, second half the column.
Mat sincos_2d(int grid_h, int grid_w, int dim);
/// Sinusoidal features of integer steps (B x dim).
Mat sinusoidal_embedding(std::span<const int> steps, int dim);

}  // namespace layoutdiff
