#include "layoutdiff/data.hpp"

#include <algorithm>
#include <cmath>

#include "json_util.hpp"
#include "layoutdiff/error.hpp"
#include "layoutdiff/metrics.hpp"
#include "layoutdiff/rng.hpp"

namespace layoutdiff {

namespace fs = std::filesystem;

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw ConfigError("unknown split '" + std::string(name) + "'");
}

std::string_view split_name(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

std::vector<std::string> CorpusManifest::ids(Split split) const {
  std::vector<std::string> out;
  for (const auto& s : samples)
    if (s.split == split) out.push_back(s.id);
  return out;
}

namespace {

nlohmann::json manifest_body(const CorpusManifest& m) {
  nlohmann::json j;
  j["categories"] = detail::categories_to_json(m.categories);
  j["samples"] = nlohmann::json::array();
  for (const auto& s : m.samples) j["samples"].push_back({{"id", s.id}, {"split", split_name(s.split)}});
  j["excluded"] = nlohmann::json::array();
  for (const auto& e : m.excluded) j["excluded"].push_back({{"id", e.id}, {"reason", e.reason}});
  j["split_seed"] = m.split_seed;
  j["generator_seed"] = m.generator_seed ? nlohmann::json(*m.generator_seed) : nlohmann::json(nullptr);
  return j;
}

fs::path canvas_path(const fs::path& root, const std::string& id) { return root / "canvases" / (id + ".png"); }
fs::path saliency_path(const fs::path& root, const std::string& id) { return root / "saliency" / (id + ".png"); }
fs::path layout_path(const fs::path& root, const std::string& id) { return root / "layouts" / (id + ".json"); }

}  // namespace

std::string manifest_to_json(const CorpusManifest& m) {
  nlohmann::json j = manifest_body(m);
  j["config_hash"] = m.config_hash;
  return j.dump(2) + "\n";
}

CorpusManifest manifest_from_json(std::string_view text) {
  CorpusManifest m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.categories = detail::categories_from_json(j.at("categories"));
    for (const auto& s : j.at("samples"))
      m.samples.push_back({s.at("id").get<std::string>(), parse_split(s.at("split").get<std::string>())});
    for (const auto& e : j.at("excluded"))
      m.excluded.push_back({e.at("id").get<std::string>(), e.at("reason").get<std::string>()});
    m.split_seed = j.at("split_seed").get<std::uint64_t>();
    if (!j.at("generator_seed").is_null()) m.generator_seed = j.at("generator_seed").get<std::uint64_t>();
    m.config_hash = j.at("config_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

CorpusManifest read_manifest(const fs::path& root) { return manifest_from_json(detail::read_text(root / "manifest.json")); }

CorpusManifest ingest(const fs::path& root, const CategorySet& cats, std::uint64_t seed, int n_max) {
  CorpusManifest m;
  m.categories = cats;
  m.split_seed = seed;

  std::vector<std::string> ids;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(root / "layouts", ec))
    if (entry.path().extension() == ".json") ids.push_back(entry.path().stem().string());
  if (ec) throw IoError("cannot list " + (root / "layouts").string() + ": " + ec.message());
  std::sort(ids.begin(), ids.end());

  std::vector<std::string> accepted;
  for (const auto& id : ids) {
    if (!fs::exists(canvas_path(root, id)) || !fs::exists(saliency_path(root, id))) {
      m.excluded.push_back({id, "missing canvas or saliency"});
      continue;
    }
    try {
      const Layout layout = read_layout(layout_path(root, id), cats);
      if (static_cast<int>(layout.elements.size()) > n_max) {
        m.excluded.push_back({id, "more than " + std::to_string(n_max) + " elements"});
        continue;
      }
      const Image canvas = read_png(canvas_path(root, id), 3);
      const SaliencyMap sal = SaliencyMap::load(saliency_path(root, id));
      if (canvas.height != sal.height() || canvas.width != sal.width()) {
        m.excluded.push_back({id, "canvas and saliency sizes differ"});
        continue;
      }
    } catch (const Error& e) {
      m.excluded.push_back({id, e.what()});
      continue;
    }
    accepted.push_back(id);
  }
  if (accepted.empty()) throw IoError("no usable samples under " + root.string());

  Rng rng(seed);
  for (std::size_t i = accepted.size() - 1; i > 0; --i)
    std::swap(accepted[i], accepted[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i)))]);

  const auto n = static_cast<double>(accepted.size());
  const auto n_train = static_cast<std::size_t>(std::lround(0.8 * n));
  const auto n_val = std::min(accepted.size() - n_train, static_cast<std::size_t>(std::lround(0.1 * n)));
  for (std::size_t i = 0; i < accepted.size(); ++i)
    m.samples.push_back({accepted[i], i < n_train ? Split::train : i < n_train + n_val ? Split::val : Split::test});

  m.config_hash = detail::hex64(detail::fnv1a(manifest_body(m).dump()));
  detail::write_text_atomic(root / "manifest.json", manifest_to_json(m));
  return m;
}

namespace {

struct PixelBox {
  int x0, y0, x1, y1;  // half-open
};

struct SyntheticSample {
  Image canvas;
  Image saliency;
  Layout layout;
};

double soft_mask(int y, int x, const PixelBox& b, double ramp) {
  const double dx = std::max({0.0, static_cast<double>(b.x0 - x), static_cast<double>(x - (b.x1 - 1))});
  const double dy = std::max({0.0, static_cast<double>(b.y0 - y), static_cast<double>(y - (b.y1 - 1))});
  return std::max(0.0, 1.0 - std::hypot(dx, dy) / ramp);
}

/// Draws one candidate; returns nullopt when the layout does not fit.
std::optional<SyntheticSample> draw_sample(Rng& rng, const SyntheticSpec& spec, const CategorySet& cats) {
  const int H = spec.height, W = spec.width;
  const bool salient_top = rng.uniform() < 0.5;
  const double band = rng.uniform(0.45, 0.55);
  const int band_px = static_cast<int>(std::lround(band * H));
  const int band_lo = salient_top ? 0 : H - band_px;
  const int band_hi = salient_top ? band_px : H;
  constexpr int kInset = 8;
  constexpr double kRamp = 4.0;

  // Salient objects, kept clear of the band's inner edge so the soft
  // falloff never reaches the free region.
  const int inner_lo = salient_top ? band_lo + 4 : band_lo + kInset;
  const int inner_hi = salient_top ? band_hi - kInset : band_hi - 4;
  const int k = rng.uniform_int(spec.min_objects, spec.max_objects);
  std::vector<PixelBox> objects;
  for (int i = 0; i < k; ++i) {
    const int avail_h = inner_hi - inner_lo;
    const int w = rng.uniform_int(W / 4, W * 3 / 5);
    const int h = rng.uniform_int(std::max(4, avail_h / 2), std::max(5, avail_h));
    const int x0 = rng.uniform_int(4, W - 4 - w);
    const int y0 = rng.uniform_int(inner_lo, std::max(inner_lo, inner_hi - h));
    objects.push_back({x0, y0, x0 + w, std::min(inner_hi, y0 + h)});
  }

  SyntheticSample s;
  s.canvas = Image(H, W, 3);
  s.saliency = Image(H, W, 1);
  double bg[3], shade[3][3];
  for (double& c : bg) c = rng.uniform(0.25, 0.9);
  for (auto& o : shade)
    for (double& c : o) c = rng.uniform(0.05, 0.95);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double texture = rng.uniform(-0.03, 0.03);
      double m = 0.0;
      int top_object = -1;
      for (int i = 0; i < k; ++i) {
        const double v = soft_mask(y, x, objects[static_cast<std::size_t>(i)], kRamp);
        if (v >= 1.0) top_object = i;
        m = std::max(m, v);
      }
      for (int c = 0; c < 3; ++c) {
        double v = bg[c] + texture;
        if (top_object >= 0) v = shade[top_object][c] * (0.8 + 0.2 * static_cast<double>(y - band_lo) / band_px);
        s.canvas.at(y, x, c) = std::clamp(v, 0.0, 1.0);
      }
      s.saliency.at(y, x) = std::max(m, 0.02 + rng.uniform(0.0, 0.02));
    }

  // Layout in the free band: a column of text elements, each on an underlay,
  // with the logo in the corner farthest from the salient band.
  constexpr double kEdge = 0.03, kGap = 0.02;
  const double free_lo = salient_top ? band + kEdge : kEdge;
  const double free_hi = salient_top ? 1.0 - kEdge : 1.0 - band - kEdge;
  const double mx = spec.underlay_margin_x, my = spec.underlay_margin_y;

  const int n_text = rng.uniform_int(spec.min_texts, spec.max_texts);
  const double cx = rng.uniform(0.38, 0.62);
  const double max_text_w = 2.0 * std::min(cx, 1.0 - cx) - 2.0 * mx - 2.0 * kEdge;
  std::vector<Box> texts;
  double column = 0.0;
  for (int i = 0; i < n_text; ++i) {
    const double w = std::min(max_text_w, rng.uniform(0.35, 0.75));
    const double h = rng.uniform(0.05, 0.09);
    texts.push_back({cx, 0.0, w, h});
    column += h + 2.0 * my + (i > 0 ? kGap : 0.0);
  }
  const double logo_w = rng.uniform(0.15, 0.28), logo_h = rng.uniform(0.05, 0.08);
  const double need = column + kGap + logo_h;
  const double slack = (free_hi - free_lo) - need;
  if (slack < 0.0) return std::nullopt;

  // Text column sits next to the salient band; the logo at the outer edge.
  double cursor = salient_top ? free_lo + rng.uniform(0.0, slack) : free_hi - rng.uniform(0.0, slack);
  std::vector<Box> underlays;
  for (auto& t : texts) {
    const double span = t.h + 2.0 * my;
    const double top = salient_top ? cursor : cursor - span;
    t.y = top + my + 0.5 * t.h;
    underlays.push_back({t.x, t.y, t.w + 2.0 * mx, span});
    cursor = salient_top ? cursor + span + kGap : cursor - span - kGap;
  }
  const bool logo_left = rng.uniform() < 0.5;
  const double logo_x = logo_left ? kEdge + 0.5 * logo_w : 1.0 - kEdge - 0.5 * logo_w;
  const double logo_y = salient_top ? free_hi - 0.5 * logo_h : free_lo + 0.5 * logo_h;

  s.layout.canvas_h = H;
  s.layout.canvas_w = W;
  s.layout.elements.push_back({cats.index_of("logo"), {logo_x, logo_y, logo_w, logo_h}});
  for (std::size_t i = 0; i < texts.size(); ++i) {
    s.layout.elements.push_back({cats.index_of("text"), texts[i]});
    s.layout.elements.push_back({cats.index_of("underlay"), underlays[i]});
  }
  return s;
}

Image quantized(const Image& img) {
  Image q = img;
  for (double& v : q.data) v = to_byte(v) / 255.0;
  return q;
}

}  // namespace

CorpusManifest generate_synthetic(const fs::path& root, int n, std::uint64_t seed, const SyntheticSpec& spec) {
  if (n < 1) throw ConfigError("synthetic corpus needs n >= 1");
  if (spec.min_texts < 1 || spec.max_texts < spec.min_texts || spec.min_objects < 1 ||
      spec.max_objects < spec.min_objects)
    throw ConfigError("synthetic spec has an empty count range");
  const CategorySet cats = CategorySet::poster();
  for (const char* sub : {"canvases", "saliency", "layouts"}) fs::create_directories(root / sub);

  for (int i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    std::optional<SyntheticSample> sample;
    for (int attempt = 0; attempt < spec.max_retries && !sample; ++attempt) {
      sample = draw_sample(rng, spec, cats);
      if (!sample) continue;
      const SaliencyMap sal(quantized(sample->saliency));
      const auto und = metrics::und(sample->layout, cats);
      const bool ok = metrics::ove(sample->layout, cats) == 0.0 && und.strict && *und.strict == 1.0 &&
                      metrics::occ(sample->layout, sal, cats) <= spec.occ_ceiling;
      if (!ok) sample.reset();
    }
    if (!sample) throw ConfigError("synthetic spec infeasible: no valid sample after retries");

    char name[32];
    std::snprintf(name, sizeof name, "syn_%05d", i);
    write_png(canvas_path(root, name), sample->canvas);
    write_png(saliency_path(root, name), sample->saliency);
    write_layout(layout_path(root, name), sample->layout, cats);
  }

  CorpusManifest m = ingest(root, cats, seed);
  m.generator_seed = seed;
  m.config_hash = detail::hex64(detail::fnv1a(manifest_body(m).dump()));
  detail::write_text_atomic(root / "manifest.json", manifest_to_json(m));
  return m;
}

CanvasBundle load_bundle(const fs::path& root, const std::string& id, const BoxExtractionParams& box_params) {
  CanvasBundle b;
  b.id = id;
  b.canvas = read_png(canvas_path(root, id), 3);
  b.saliency = SaliencyMap::load(saliency_path(root, id));
  if (b.canvas.height != b.saliency.height() || b.canvas.width != b.saliency.width())
    throw IoError("canvas and saliency sizes differ");
  b.boxes = extract_boxes(b.saliency, box_params);
  return b;
}

PreparedSample load_sample(const fs::path& root, const std::string& id, const CategorySet& cats,
                           const ModelConfig& cfg, const BoxExtractionParams& box_params) {
  if (cfg.n_categories != cats.size())
    throw ConfigError("model expects " + std::to_string(cfg.n_categories) + " categories, corpus has " +
                      std::to_string(cats.size()));
  try {
    PreparedSample s;
    s.id = id;
    s.layout = read_layout(layout_path(root, id), cats);
    s.x0 = tokenize(s.layout, cats, cfg.n_max);
    s.bundle = load_bundle(root, id, box_params);
    s.cond = prepare_condition(resize_area(s.bundle.canvas, cfg.img_h, cfg.img_w),
                               SaliencyMap(resize_area(s.bundle.saliency.image(), cfg.img_h, cfg.img_w)),
                               s.bundle.boxes, cfg);
    return s;
  } catch (const Error& e) {
    throw IoError("sample " + id + ": " + e.what());
  }
}

PreparedSample mirror_sample(const PreparedSample& sample, const CategorySet& cats, const ModelConfig& cfg,
                             bool vertical, bool horizontal, const BoxExtractionParams& box_params) {
  PreparedSample s;
  s.id = sample.id;
  s.layout = sample.layout;
  for (auto& el : s.layout.elements) {
    if (vertical) el.box.y = 1.0 - el.box.y;
    if (horizontal) el.box.x = 1.0 - el.box.x;
  }
  s.x0 = tokenize(s.layout, cats, cfg.n_max);
  s.bundle.id = sample.bundle.id;
  s.bundle.canvas = mirror(sample.bundle.canvas, vertical, horizontal);
  s.bundle.saliency = SaliencyMap(mirror(sample.bundle.saliency.image(), vertical, horizontal));
  s.bundle.boxes = extract_boxes(s.bundle.saliency, box_params);
  s.cond = prepare_condition(resize_area(s.bundle.canvas, cfg.img_h, cfg.img_w),
                             SaliencyMap(resize_area(s.bundle.saliency.image(), cfg.img_h, cfg.img_w)),
                             s.bundle.boxes, cfg);
  return s;
}

std::vector<PreparedSample> load_split(const fs::path& root, const CorpusManifest& manifest, Split split,
                                       const ModelConfig& cfg, const BoxExtractionParams& box_params) {
  std::vector<PreparedSample> out;
  for (const auto& id : manifest.ids(split)) out.push_back(load_sample(root, id, manifest.categories, cfg, box_params));
  return out;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size, std::uint64_t seed, int epoch) {
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n; i > 1; --i)
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i - 1)))]);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(batch_size))
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + static_cast<std::size_t>(batch_size))));
  return batches;
}

}  // namespace layoutdiff
