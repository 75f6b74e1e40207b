#include "layoutdiff/model.hpp"

#include <cmath>

#include "layoutdiff/error.hpp"

namespace layoutdiff {

using ag::Graph;
using ag::Segments;
using ag::Var;

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (d_model <= 0 || n_heads <= 0 || ffn_dim <= 0 || img_ffn_dim <= 0) fail("dimensions must be positive");
  if (d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
  if (d_model % 4 != 0) fail("d_model must be divisible by 4 for the 2-D position table");
  if (enc_layers < 0 || dec_layers < 1 || img_layers < 0 || cgbfp_layers < 0) fail("invalid layer counts");
  if (cgbfp_queries < 1) fail("need at least one balance-factor query");
  if (patch_size <= 0 || img_h % patch_size != 0 || img_w % patch_size != 0)
    fail("img_h and img_w must be divisible by patch_size");
  if (n_max < 1) fail("n_max must be positive");
  if (n_categories < 2) fail("need the empty category plus at least one real category");
}

ModelConfig model_preset(std::string_view name, int n_categories) {
  ModelConfig c;
  c.n_categories = n_categories;
  if (name == "desk") return c;
  if (name == "pku" || name == "cgl") {
    c.d_model = 512;
    c.n_heads = 8;
    c.ffn_dim = 1024;
    c.img_ffn_dim = 2048;
    c.enc_layers = 2;
    c.dec_layers = 4;
    c.img_layers = 6;
    c.cgbfp_layers = 2;
    c.cgbfp_queries = 8;
    c.patch_size = 32;
    c.img_h = 384;
    c.img_w = 256;
    return c;
  }
  throw ConfigError("unknown preset '" + std::string(name) + "' (expected desk, pku or cgl)");
}

SampleCondition prepare_condition(const Image& canvas, const SaliencyMap& saliency, const SalientBoxSet& boxes,
                                  const ModelConfig& cfg) {
  if (canvas.channels != 3) throw ConfigError("canvas must be RGB");
  if (canvas.height != cfg.img_h || canvas.width != cfg.img_w || saliency.height() != cfg.img_h ||
      saliency.width() != cfg.img_w)
    throw ConfigError("condition images must be " + std::to_string(cfg.img_h) + "x" + std::to_string(cfg.img_w));
  const int p = cfg.patch_size;
  SampleCondition out;
  out.patches.resize(cfg.patch_count(), cfg.patch_dim());
  for (int gy = 0; gy < cfg.grid_h(); ++gy)
    for (int gx = 0; gx < cfg.grid_w(); ++gx) {
      const int row = gy * cfg.grid_w() + gx;
      int col = 0;
      for (int py = 0; py < p; ++py)
        for (int px = 0; px < p; ++px) {
          const int y = gy * p + py, x = gx * p + px;
          for (int c = 0; c < 3; ++c) out.patches(row, col++) = to_signed(canvas.at(y, x, c));
          out.patches(row, col++) = to_signed(saliency.at(y, x));
        }
    }
  out.boxes = boxes.boxes;
  return out;
}

Conditioning Conditioning::stack(std::span<const SampleCondition* const> samples) {
  Conditioning c;
  if (samples.empty()) return c;
  const auto p = samples.front()->patches.rows();
  const auto pd = samples.front()->patches.cols();
  c.patches.resize(p * static_cast<Eigen::Index>(samples.size()), pd);
  int box_rows = 0;
  for (const auto* s : samples) box_rows += std::max<int>(1, static_cast<int>(s->boxes.size()));
  c.boxes = Mat::Zero(box_rows, 4);
  int r = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = *samples[i];
    if (s.patches.rows() != p || s.patches.cols() != pd) throw ConfigError("conditions have different patch shapes");
    c.patches.middleRows(static_cast<Eigen::Index>(i) * p, p) = s.patches;
    c.box_counts.push_back(static_cast<int>(s.boxes.size()));
    if (s.boxes.empty()) {
      ++r;
      continue;
    }
    for (const auto& b : s.boxes) {
      for (int k = 0; k < 4; ++k) c.boxes(r, k) = to_signed(b[k]);
      ++r;
    }
  }
  return c;
}

Mat sinusoidal_embedding(std::span<const int> steps, int dim) {
  const int half = dim / 2;
  Mat out = Mat::Zero(static_cast<Eigen::Index>(steps.size()), dim);
  for (std::size_t i = 0; i < steps.size(); ++i)
    for (int k = 0; k < half; ++k) {
      const double freq = std::exp(-std::log(10000.0) * k / half);
      out(static_cast<Eigen::Index>(i), k) = std::sin(steps[i] * freq);
      out(static_cast<Eigen::Index>(i), half + k) = std::cos(steps[i] * freq);
    }
  return out;
}

Mat sincos_2d(int grid_h, int grid_w, int dim) {
  const int half = dim / 2;
  const int quarter = half / 2;
  Mat out(grid_h * grid_w, dim);
  for (int gy = 0; gy < grid_h; ++gy)
    for (int gx = 0; gx < grid_w; ++gx) {
      const int r = gy * grid_w + gx;
      for (int k = 0; k < quarter; ++k) {
        const double freq = std::pow(10000.0, -static_cast<double>(k) / quarter);
        out(r, k) = std::sin(gy * freq);
        out(r, quarter + k) = std::cos(gy * freq);
        out(r, half + k) = std::sin(gx * freq);
        out(r, half + quarter + k) = std::cos(gx * freq);
      }
    }
  return out;
}

Denoiser::Denoiser(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const int d = cfg_.d_model;
  const int h = cfg_.n_heads;

  time_fc1_ = nn::Linear::make(params_, rng, "time_mlp.fc1", d, d);
  time_fc2_ = nn::Linear::make(params_, rng, "time_mlp.fc2", d, d);

  layout_in_ = nn::Linear::make(params_, rng, "layout_enc.embed", cfg_.feature_dim(), d);
  layout_pos_ = &params_.add("layout_enc.pos", nn::trunc_normal(rng, cfg_.n_max, d, 0.02));
  for (int i = 0; i < cfg_.enc_layers; ++i)
    layout_blocks_.push_back(
        nn::EncoderBlock::make(params_, rng, "layout_enc.blocks." + std::to_string(i), d, h, cfg_.ffn_dim));
  layout_norm_ = nn::LayerNorm::make(params_, "layout_enc.norm", d);

  patch_embed_ = nn::Linear::make(params_, rng, "image_enc.patch_embed", cfg_.patch_dim(), d);
  image_pos_ = sincos_2d(cfg_.grid_h(), cfg_.grid_w(), d);
  for (int i = 0; i < cfg_.img_layers; ++i)
    image_blocks_.push_back(
        nn::EncoderBlock::make(params_, rng, "image_enc.blocks." + std::to_string(i), d, h, cfg_.img_ffn_dim));
  image_norm_ = nn::LayerNorm::make(params_, "image_enc.norm", d);

  // Fan-in scaled: at std 0.02 the softplus stack maps every box to nearly
  // the same vector.
  box_fc1_ = nn::Linear::make(params_, rng, "box_enc.fc1", 4, d, 1.0 / std::sqrt(4.0));
  box_fc2_ = nn::Linear::make(params_, rng, "box_enc.fc2", d, d, 1.0 / std::sqrt(static_cast<double>(d)));
  box_fc3_ = nn::Linear::make(params_, rng, "box_enc.fc3", d, d, 1.0 / std::sqrt(static_cast<double>(d)));
  box_null_ = &params_.add("box_enc.null", nn::trunc_normal(rng, 1, d, 0.02));

  queries_ = &params_.add("cgbfp.queries", nn::trunc_normal(rng, cfg_.cgbfp_queries, d, 0.02));
  for (int i = 0; i < cfg_.cgbfp_layers; ++i) {
    const std::string n = "cgbfp.blocks." + std::to_string(i);
    QueryBlock b;
    b.ln_self = nn::LayerNorm::make(params_, n + ".ln_self", d);
    b.self_attn = nn::MultiHeadAttention::make(params_, rng, n + ".self_attn", d, h);
    b.ln_cross = nn::LayerNorm::make(params_, n + ".ln_cross", d);
    b.cross_attn = nn::MultiHeadAttention::make(params_, rng, n + ".cross_attn", d, h);
    b.ln_ffn = nn::LayerNorm::make(params_, n + ".ln_ffn", d);
    b.ffn = nn::FeedForward::make(params_, rng, n + ".ffn", d, cfg_.img_ffn_dim);
    query_blocks_.push_back(b);
  }
  query_norm_ = nn::LayerNorm::make(params_, "cgbfp.norm", d);
  omega_head_ = nn::Linear::make(params_, rng, "cgbfp.head", d, 1);
  // softplus(log(e - 1)) == 1: the image branch starts at unit weight.
  omega_head_.bias->value(0, 0) = std::log(std::exp(1.0) - 1.0);

  for (int i = 0; i < cfg_.dec_layers; ++i) {
    const std::string n = "decoder.blocks." + std::to_string(i);
    DecoderBlock b;
    b.ln_self = nn::LayerNorm::make(params_, n + ".ln_self", d);
    b.self_attn = nn::MultiHeadAttention::make(params_, rng, n + ".self_attn", d, h);
    b.ln_image = nn::LayerNorm::make(params_, n + ".ln_image", d);
    b.image_attn = nn::MultiHeadAttention::make(params_, rng, n + ".image_attn", d, h);
    b.ln_box = nn::LayerNorm::make(params_, n + ".ln_box", d);
    b.box_attn = nn::MultiHeadAttention::make(params_, rng, n + ".box_attn", d, h);
    b.ln_ffn = nn::LayerNorm::make(params_, n + ".ln_ffn", d);
    b.ffn = nn::FeedForward::make(params_, rng, n + ".ffn", d, cfg_.ffn_dim);
    decoder_blocks_.push_back(b);
  }
  decoder_norm_ = nn::LayerNorm::make(params_, "decoder.norm", d);
  noise_head_ = nn::Linear::make(params_, rng, "decoder.head", d, cfg_.feature_dim(), 0.0);
}

Var Denoiser::timestep_embedding(Graph& g, std::span<const int> steps) const {
  Var s = g.constant(sinusoidal_embedding(steps, cfg_.d_model));
  return time_fc2_(g, ag::gelu(time_fc1_(g, s)));
}

Var Denoiser::encode_layout(Graph& g, Var x_t, Var t_emb, const Segments& segs) const {
  if (x_t.cols() != cfg_.feature_dim() || segs.total() != x_t.rows() || segs.batch() != t_emb.rows())
    throw ConfigError("layout tensor shape does not match the model");
  Var x = layout_in_(g, x_t);
  x = ag::add_tiled(x, g.param(*layout_pos_));
  x = ag::add_segment_rows(x, t_emb, segs);
  for (const auto& b : layout_blocks_) x = b(g, x, segs);
  return layout_norm_(g, x);
}

Var Denoiser::encode_image(Graph& g, const Mat& patches, int batch) const {
  if (patches.cols() != cfg_.patch_dim() || patches.rows() != static_cast<Eigen::Index>(batch) * cfg_.patch_count())
    throw ConfigError("image patches do not match the configured resolution");
  const Segments segs = Segments::uniform(batch, cfg_.patch_count());
  Var x = patch_embed_(g, g.constant(patches));
  x = ag::add_tiled(x, g.constant(image_pos_));
  for (const auto& b : image_blocks_) x = b(g, x, segs);
  return image_norm_(g, x);
}

Var Denoiser::encode_boxes(Graph& g, const Conditioning& cond, Segments& segs) const {
  std::vector<int> sizes;
  std::vector<char> use_null;
  for (int k : cond.box_counts) {
    sizes.push_back(std::max(k, 1));
    if (k == 0)
      use_null.push_back(1);
    else
      use_null.insert(use_null.end(), static_cast<std::size_t>(k), 0);
  }
  segs = Segments::from_sizes(sizes);
  if (cond.boxes.rows() != segs.total() || cond.boxes.cols() != 4) throw ConfigError("box rows do not match counts");
  Var x = ag::softplus(box_fc1_(g, g.constant(cond.boxes)));
  x = ag::softplus(box_fc2_(g, x));
  x = box_fc3_(g, x);
  return ag::select_rows(x, g.param(*box_null_), use_null);
}

Var Denoiser::predict_omega(Graph& g, Var f_image, const Segments& image_segs, Var f_layout,
                            const Segments& layout_segs, Var t_emb) const {
  const int batch = image_segs.batch();
  if (layout_segs.batch() != batch || t_emb.rows() != batch) throw ConfigError("balance predictor batch mismatch");
  Segments mem_segs;
  Var memory = ag::concat_segments(f_image, image_segs, f_layout, layout_segs, mem_segs);
  const Segments qsegs = Segments::uniform(batch, cfg_.cgbfp_queries);
  Var q = ag::tile(g.param(*queries_), batch);
  q = ag::add_segment_rows(q, t_emb, qsegs);
  for (const auto& b : query_blocks_) {
    Var h = b.ln_self(g, q);
    q = ag::add(q, b.self_attn(g, h, h, qsegs, qsegs));
    q = ag::add(q, b.cross_attn(g, b.ln_cross(g, q), memory, qsegs, mem_segs));
    q = ag::add(q, b.ffn(g, b.ln_ffn(g, q)));
  }
  Var pooled = ag::segment_mean(query_norm_(g, q), qsegs);
  return ag::softplus(omega_head_(g, pooled));
}

Var Denoiser::decode(Graph& g, const FeatureBundle& f, Var omega) const {
  if (omega.rows() != f.layout_segs.batch() || omega.cols() != 1) throw ConfigError("omega must be batch x 1");
  Var x = ag::add_segment_rows(f.layout, f.t_emb, f.layout_segs);
  for (const auto& b : decoder_blocks_) {
    Var h = b.ln_self(g, x);
    x = ag::add(x, b.self_attn(g, h, h, f.layout_segs, f.layout_segs));
    Var img = b.image_attn(g, b.ln_image(g, x), f.image, f.layout_segs, f.image_segs);
    x = ag::add(x, ag::scale_segments(img, omega, f.layout_segs));
    x = ag::add(x, b.box_attn(g, b.ln_box(g, x), f.boxes, f.layout_segs, f.box_segs));
    x = ag::add(x, b.ffn(g, b.ln_ffn(g, x)));
  }
  return noise_head_(g, decoder_norm_(g, x));
}

FeatureBundle Denoiser::encode(Graph& g, const Mat& x_t, std::span<const int> steps, const Conditioning& cond) const {
  const int batch = cond.batch();
  if (static_cast<int>(steps.size()) != batch || x_t.rows() != static_cast<Eigen::Index>(batch) * cfg_.n_max)
    throw ConfigError("batch sizes of x_t, steps and conditioning differ");
  FeatureBundle f;
  f.layout_segs = Segments::uniform(batch, cfg_.n_max);
  f.image_segs = Segments::uniform(batch, cfg_.patch_count());
  f.t_emb = timestep_embedding(g, steps);
  f.layout = encode_layout(g, g.constant(x_t), f.t_emb, f.layout_segs);
  f.image = encode_image(g, cond.patches, batch);
  f.boxes = encode_boxes(g, cond, f.box_segs);
  return f;
}

Denoiser::Output Denoiser::forward(Graph& g, const Mat& x_t, std::span<const int> steps, const Conditioning& cond,
                                   const ForwardOptions& opts) const {
  const FeatureBundle f = encode(g, x_t, steps, cond);
  Var omega = opts.omega_override ? g.constant(Mat::Constant(cond.batch(), 1, *opts.omega_override))
                                  : predict_omega(g, f.image, f.image_segs, f.layout, f.layout_segs, f.t_emb);
  return {decode(g, f, omega), omega};
}

Mat Denoiser::predict_noise(const Mat& x_t, std::span<const int> steps, const Conditioning& cond,
                            const ForwardOptions& opts) const {
  Graph g(/*record=*/false);
  return forward(g, x_t, steps, cond, opts).eps.value();
}

}  // namespace layoutdiff
