#include "layoutdiff/validation/oracles.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "layoutdiff/autograd.hpp"

namespace layoutdiff::validation {

SalientBoxSet reference_boxes(const BinaryMask& mask, int k_max, double min_area) {
  const int H = mask.height, W = mask.width;
  std::vector<long> label(static_cast<std::size_t>(H) * W, -1);
  for (int i = 0; i < H * W; ++i)
    if (mask.bits[static_cast<std::size_t>(i)]) label[static_cast<std::size_t>(i)] = i;

  for (bool changed = true; changed;) {
    changed = false;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        auto& l = label[static_cast<std::size_t>(y) * W + x];
        if (l < 0) continue;
        const int ny[4] = {y - 1, y + 1, y, y}, nx[4] = {x, x, x - 1, x + 1};
        for (int k = 0; k < 4; ++k) {
          if (ny[k] < 0 || ny[k] >= H || nx[k] < 0 || nx[k] >= W) continue;
          const long o = label[static_cast<std::size_t>(ny[k]) * W + nx[k]];
          if (o >= 0 && o < l) {
            l = o;
            changed = true;
          }
        }
      }
  }

  struct Comp {
    long first;
    long area = 0;
    int r0, c0, r1, c1;
  };
  std::map<long, Comp> comps;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const long l = label[static_cast<std::size_t>(y) * W + x];
      if (l < 0) continue;
      auto [it, fresh] = comps.try_emplace(l, Comp{l, 0, y, x, y, x});
      auto& c = it->second;
      ++c.area;
      c.r0 = std::min(c.r0, y);
      c.r1 = std::max(c.r1, y);
      c.c0 = std::min(c.c0, x);
      c.c1 = std::max(c.c1, x);
    }

  std::vector<Comp> kept;
  for (const auto& [l, c] : comps)
    if (static_cast<double>(c.area) / (static_cast<double>(H) * W) >= min_area) kept.push_back(c);
  std::sort(kept.begin(), kept.end(), [](const Comp& a, const Comp& b) {
    return a.area != b.area ? a.area > b.area : a.first < b.first;
  });
  if (static_cast<int>(kept.size()) > k_max) kept.resize(static_cast<std::size_t>(k_max));

  SalientBoxSet out;
  for (const auto& c : kept)
    out.boxes.push_back(Box::from_edges(static_cast<double>(c.c0) / W, static_cast<double>(c.r0) / H,
                                        static_cast<double>(c.c1 + 1) / W, static_cast<double>(c.r1 + 1) / H));
  return out;
}

BinaryMask random_blob_mask(Rng& rng, int height, int width, int blobs) {
  BinaryMask m{height, width, std::vector<std::uint8_t>(static_cast<std::size_t>(height) * width, 0)};
  for (int b = 0; b < blobs; ++b) {
    const double cy = rng.uniform(0, height), cx = rng.uniform(0, width);
    const double ry = rng.uniform(1.0, height / 4.0), rx = rng.uniform(1.0, width / 4.0);
    const bool ellipse = rng.uniform() < 0.5;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double dy = (y - cy) / ry, dx = (x - cx) / rx;
        const bool in = ellipse ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        if (in) m.at(y, x) = 1;
      }
  }
  const int speckles = rng.uniform_int(0, height * width / 50);
  for (int i = 0; i < speckles; ++i) m.at(rng.uniform_int(0, height - 1), rng.uniform_int(0, width - 1)) = 1;
  return m;
}

SaliencyMap random_saliency(Rng& rng, int height, int width) {
  Image img(height, width, 1);
  const int blobs = rng.uniform_int(1, 4);
  std::vector<std::array<double, 4>> g;
  for (int i = 0; i < blobs; ++i)
    g.push_back({rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0.05, 0.3), rng.uniform(0.5, 1.0)});
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double v = (y + 0.5) / height, u = (x + 0.5) / width;
      double s = 0.1 * rng.uniform();
      for (const auto& [cy, cx, r, a] : g) s += a * std::exp(-((u - cx) * (u - cx) + (v - cy) * (v - cy)) / (r * r));
      img.at(y, x) = std::clamp(s, 0.0, 1.0);
    }
  return SaliencyMap(std::move(img));
}

Layout random_layout(Rng& rng, const CategorySet& cats, int max_elements) {
  Layout l;
  const int n = rng.uniform_int(1, max_elements);
  const auto& under = cats.underlay_indices();
  const auto& text = cats.text_indices();
  while (static_cast<int>(l.elements.size()) < n) {
    const int cat = rng.uniform_int(1, cats.size() - 1);
    const double w = rng.uniform(0.05, 0.6), h = rng.uniform(0.05, 0.6);
    const Box b{rng.uniform(w / 2, 1 - w / 2), rng.uniform(h / 2, 1 - h / 2), w, h};
    l.elements.push_back({cat, b});
    const bool is_under = std::find(under.begin(), under.end(), cat) != under.end();
    if (is_under && !text.empty() && static_cast<int>(l.elements.size()) < n && rng.uniform() < 0.5) {
      // Inner box at least a few raster cells away from every edge.
      const double iw = w * rng.uniform(0.3, 0.8), ih = h * rng.uniform(0.3, 0.8);
      const double ix = b.x + rng.uniform(-0.5, 0.5) * (w - iw - 0.02);
      const double iy = b.y + rng.uniform(-0.5, 0.5) * (h - ih - 0.02);
      l.elements.push_back({text.front(), {ix, iy, iw, ih}});
    }
  }
  return l;
}

ModelConfig toy_config() {
  ModelConfig c;
  c.d_model = 8;
  c.n_heads = 2;
  c.ffn_dim = 16;
  c.img_ffn_dim = 16;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.img_layers = 1;
  c.cgbfp_layers = 1;
  c.cgbfp_queries = 2;
  c.patch_size = 4;
  c.img_h = 8;
  c.img_w = 8;
  c.n_max = 2;
  c.n_categories = 4;
  return c;
}

GradCheckResult gradient_check(const ModelConfig& cfg, std::uint64_t seed, double step) {
  Denoiser model(cfg, seed);
  Rng rng(mix_seed(seed, 17));
  auto randomize = [&](Mat& m, double sd) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = sd * rng.normal();
  };
  for (auto& p : model.params().all())
    if (p->name.rfind("decoder.head.", 0) == 0) randomize(p->value, 0.5);

  const int n = cfg.n_max, f = cfg.feature_dim();
  SampleCondition with_boxes, without_boxes;
  for (auto* c : {&with_boxes, &without_boxes}) {
    c->patches.resize(cfg.patch_count(), cfg.patch_dim());
    for (Eigen::Index i = 0; i < c->patches.size(); ++i) c->patches.data()[i] = rng.uniform(-1, 1);
  }
  with_boxes.boxes = {{0.3, 0.4, 0.2, 0.3}, {0.7, 0.2, 0.4, 0.1}};
  const SampleCondition* conds[] = {&with_boxes, &without_boxes};
  const Conditioning cond = Conditioning::stack(conds);

  Mat x(2 * n, f), target(2 * n, f), weight(2 * n, f);
  randomize(x, 1.0);
  randomize(target, 1.0);
  for (Eigen::Index i = 0; i < weight.size(); ++i) weight.data()[i] = rng.uniform(0.1, 1.0);
  const std::vector<int> steps{3, 17};

  auto loss = [&](bool backward) {
    ag::Graph g(backward);
    const auto out = model.forward(g, x, steps, cond);
    const ag::Var l = ag::masked_mse(out.eps, target, weight);
    if (backward) g.backward(l);
    return l.value()(0, 0);
  };

  model.params().zero_grad();
  loss(true);

  GradCheckResult res;
  for (auto& p : model.params().all()) {
    const std::string group = p->name.substr(0, p->name.find('.'));
    double& worst = res.group_error[group];
    const Mat analytic = p->grad.size() ? p->grad : Mat::Zero(p->value.rows(), p->value.cols());
    if (analytic.cwiseAbs().maxCoeff() == 0.0) res.untouched.push_back(p->name);
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double keep = p->value.data()[i];
      auto at = [&](double offset) {
        p->value.data()[i] = keep + offset;
        return loss(false);
      };
      const double numeric = (8.0 * (at(step) - at(-step)) - (at(2.0 * step) - at(-2.0 * step))) / (12.0 * step);
      p->value.data()[i] = keep;
      const double a = analytic.data()[i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
      worst = std::max(worst, err);
      res.max_error = std::max(res.max_error, err);
      ++res.probes;
    }
  }
  return res;
}

}  // namespace layoutdiff::validation
