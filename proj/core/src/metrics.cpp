#include "layoutdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "layoutdiff/error.hpp"

namespace layoutdiff::metrics {

namespace {

Box visible(const Box& b) {
  const double l = std::clamp(b.left(), 0.0, 1.0), r = std::clamp(b.right(), 0.0, 1.0);
  const double t = std::clamp(b.top(), 0.0, 1.0), d = std::clamp(b.bottom(), 0.0, 1.0);
  return Box::from_edges(l, t, std::max(l, r), std::max(t, d));
}

double intersection(const Box& a, const Box& b) {
  const double w = std::min(a.right(), b.right()) - std::max(a.left(), b.left());
  const double h = std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top());
  return w > 0.0 && h > 0.0 ? w * h : 0.0;
}

std::vector<Box> boxes_where(const Layout& layout, auto&& keep) {
  std::vector<Box> out;
  for (const auto& el : layout.elements)
    if (!el.empty() && keep(el)) out.push_back(visible(el.box));
  return out;
}

/// Summed-area table of a piecewise-constant raster; integrate() is exact
/// over any axis-aligned rectangle because the table is bilinear inside a cell.
class AreaIntegral {
 public:
  AreaIntegral(int height, int width, auto&& value) : h_(height), w_(width), sat_((height + 1) * (width + 1), 0.0) {
    for (int y = 0; y < h_; ++y) {
      double row = 0.0;
      for (int x = 0; x < w_; ++x) {
        row += value(y, x);
        at(y + 1, x + 1) = at(y, x + 1) + row;
      }
    }
  }

  /// Integral over normalized rectangle, in units of (pixel count).
  double integrate(double x0, double y0, double x1, double y1) const {
    return eval(x1 * w_, y1 * h_) - eval(x0 * w_, y1 * h_) - eval(x1 * w_, y0 * h_) + eval(x0 * w_, y0 * h_);
  }
  double total() const { return sat_.back(); }

 private:
  double& at(int y, int x) { return sat_[static_cast<std::size_t>(y) * (w_ + 1) + x]; }
  double at(int y, int x) const { return sat_[static_cast<std::size_t>(y) * (w_ + 1) + x]; }

  double eval(double X, double Y) const {
    X = std::clamp(X, 0.0, static_cast<double>(w_));
    Y = std::clamp(Y, 0.0, static_cast<double>(h_));
    const int j = std::min(static_cast<int>(X), w_ - 1);
    const int i = std::min(static_cast<int>(Y), h_ - 1);
    const double fx = X - j, fy = Y - i;
    return (1 - fx) * (1 - fy) * at(i, j) + fx * (1 - fy) * at(i, j + 1) + (1 - fx) * fy * at(i + 1, j) +
           fx * fy * at(i + 1, j + 1);
  }

  int h_, w_;
  std::vector<double> sat_;
};

/// Area of the union of boxes and the integral of `field` over it, via
/// coordinate compression into disjoint cells.
std::pair<double, double> union_integral(const std::vector<Box>& boxes, const AreaIntegral& field) {
  std::vector<double> xs, ys;
  for (const auto& b : boxes) {
    if (b.w <= 0.0 || b.h <= 0.0) continue;
    xs.insert(xs.end(), {b.left(), b.right()});
    ys.insert(ys.end(), {b.top(), b.bottom()});
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  std::sort(ys.begin(), ys.end());
  ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
  double area = 0.0, integral = 0.0;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i)
    for (std::size_t j = 0; j + 1 < ys.size(); ++j) {
      const double cx = 0.5 * (xs[i] + xs[i + 1]), cy = 0.5 * (ys[j] + ys[j + 1]);
      const bool covered = std::any_of(boxes.begin(), boxes.end(), [&](const Box& b) {
        return cx > b.left() && cx < b.right() && cy > b.top() && cy < b.bottom();
      });
      if (!covered) continue;
      area += (xs[i + 1] - xs[i]) * (ys[j + 1] - ys[j]);
      integral += field.integrate(xs[i], ys[j], xs[i + 1], ys[j + 1]);
    }
  return {area, integral};
}

std::optional<double> mean_of(const std::vector<std::optional<double>>& values) {
  double sum = 0.0;
  int n = 0;
  for (const auto& v : values)
    if (v) {
      sum += *v;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / n;
}

}  // namespace

double overlap_ratio(const Box& a, const Box& b) {
  const Box va = visible(a);
  if (va.area() <= 0.0) return 0.0;
  return std::min(1.0, intersection(va, visible(b)) / va.area());
}

double iou(const Box& a, const Box& b) {
  const Box va = visible(a), vb = visible(b);
  const double inter = intersection(va, vb);
  const double uni = va.area() + vb.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<double> underlay_ratios(const Layout& layout, const CategorySet& cats) {
  std::vector<double> out;
  for (const auto& u : layout.elements) {
    if (u.empty() || !cats.is_underlay(u.category)) continue;
    double best = 0.0;
    for (const auto& e : layout.elements)
      if (!e.empty() && !cats.is_underlay(e.category)) best = std::max(best, overlap_ratio(e.box, u.box));
    out.push_back(best);
  }
  return out;
}

UnderlayScore und(const Layout& layout, const CategorySet& cats, double strict_tol) {
  const auto r = underlay_ratios(layout, cats);
  if (r.empty()) return {};
  double sum = 0.0, strict = 0.0;
  for (double v : r) {
    sum += v;
    strict += v >= 1.0 - strict_tol ? 1.0 : 0.0;
  }
  return {sum / static_cast<double>(r.size()), strict / static_cast<double>(r.size())};
}

double ove(const Layout& layout, const CategorySet& cats) {
  const auto boxes = boxes_where(layout, [&](const LayoutElement& e) { return !cats.is_underlay(e.category); });
  if (boxes.size() < 2) return 0.0;
  double sum = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < boxes.size(); ++i)
    for (std::size_t j = i + 1; j < boxes.size(); ++j, ++pairs) sum += iou(boxes[i], boxes[j]);
  return sum / pairs;
}

double occ(const Layout& layout, const SaliencyMap& saliency, const CategorySet& cats, const Options& opts) {
  const auto boxes = boxes_where(
      layout, [&](const LayoutElement& e) { return !(opts.occ_non_underlay_only && cats.is_underlay(e.category)); });
  const AreaIntegral field(saliency.height(), saliency.width(), [&](int y, int x) { return saliency.at(y, x); });
  const auto [area, integral] = union_integral(boxes, field);
  if (area <= 0.0) return 0.0;
  return integral / (area * saliency.height() * saliency.width());
}

std::optional<double> rea(const Layout& layout, const Image& canvas, const CategorySet& cats) {
  const Image lum = luminance(canvas);
  const int h = lum.height, w = lum.width;
  std::vector<PixelRect> text, under;
  for (const auto& el : layout.elements) {
    if (el.empty()) continue;
    if (cats.is_text(el.category)) text.push_back(pixel_rect(el.box, h, w));
    if (cats.is_underlay(el.category)) under.push_back(pixel_rect(el.box, h, w));
  }
  double sum = 0.0;
  long count = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (std::none_of(text.begin(), text.end(), [&](const PixelRect& r) { return r.contains(y, x); })) continue;
      if (std::any_of(under.begin(), under.end(), [&](const PixelRect& r) { return r.contains(y, x); })) continue;
      const double gx = 0.5 * (lum.at(y, std::min(x + 1, w - 1)) - lum.at(y, std::max(x - 1, 0)));
      const double gy = 0.5 * (lum.at(std::min(y + 1, h - 1), x) - lum.at(std::max(y - 1, 0), x));
      sum += std::sqrt(gx * gx + gy * gy);
      ++count;
    }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

std::optional<double> sma(const Layout& layout) {
  int n = 0, small = 0;
  for (const auto& el : layout.elements) {
    if (el.empty()) continue;
    ++n;
    if (el.box.w * el.box.h < 0.001 || el.box.w < 0.02 || el.box.h < 0.02) ++small;
  }
  if (n == 0) return std::nullopt;
  return static_cast<double>(small) / n;
}

std::optional<double> uti(const Layout& layout, const SaliencyMap& saliency, double s) {
  const AreaIntegral field(saliency.height(), saliency.width(),
                           [&](int y, int x) { return saliency.at(y, x) <= s ? 1.0 : 0.0; });
  if (field.total() <= 0.0) return std::nullopt;
  const auto boxes = boxes_where(layout, [](const LayoutElement&) { return true; });
  const auto [area, integral] = union_integral(boxes, field);
  return integral / field.total();
}

namespace pixel {

namespace {

using Raster = std::vector<std::uint8_t>;

Raster rasterize(const Box& b, int grid) {
  Raster r(static_cast<std::size_t>(grid) * grid, 0);
  for (int i = 0; i < grid; ++i) {
    const double v = (i + 0.5) / grid;
    if (!(v >= b.top() && v < b.bottom())) continue;
    for (int j = 0; j < grid; ++j) {
      const double u = (j + 0.5) / grid;
      if (u >= b.left() && u < b.right()) r[static_cast<std::size_t>(i) * grid + j] = 1;
    }
  }
  return r;
}

long count(const Raster& r) { return std::count(r.begin(), r.end(), std::uint8_t{1}); }

long count_both(const Raster& a, const Raster& b) {
  long n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += a[i] & b[i];
  return n;
}

Raster union_of(const Layout& layout, int grid, auto&& keep) {
  Raster u(static_cast<std::size_t>(grid) * grid, 0);
  for (const auto& el : layout.elements) {
    if (el.empty() || !keep(el)) continue;
    const Raster r = rasterize(el.box, grid);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] |= r[i];
  }
  return u;
}

double lookup(const SaliencyMap& s, int i, int j, int grid) {
  const int y = std::min(s.height() - 1, static_cast<int>((i + 0.5) / grid * s.height()));
  const int x = std::min(s.width() - 1, static_cast<int>((j + 0.5) / grid * s.width()));
  return s.at(y, x);
}

}  // namespace

double overlap_ratio(const Box& a, const Box& b, int grid) {
  const Raster ra = rasterize(a, grid);
  const long na = count(ra);
  return na == 0 ? 0.0 : static_cast<double>(count_both(ra, rasterize(b, grid))) / static_cast<double>(na);
}

double iou(const Box& a, const Box& b, int grid) {
  const Raster ra = rasterize(a, grid), rb = rasterize(b, grid);
  const long inter = count_both(ra, rb);
  const long uni = count(ra) + count(rb) - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<double> underlay_ratios(const Layout& layout, const CategorySet& cats, int grid) {
  std::vector<double> out;
  for (const auto& u : layout.elements) {
    if (u.empty() || !cats.is_underlay(u.category)) continue;
    const Raster ru = rasterize(u.box, grid);
    double best = 0.0;
    for (const auto& e : layout.elements) {
      if (e.empty() || cats.is_underlay(e.category)) continue;
      const Raster re = rasterize(e.box, grid);
      const long ne = count(re);
      if (ne > 0) best = std::max(best, static_cast<double>(count_both(re, ru)) / static_cast<double>(ne));
    }
    out.push_back(best);
  }
  return out;
}

double ove(const Layout& layout, const CategorySet& cats, int grid) {
  std::vector<Box> boxes;
  for (const auto& e : layout.elements)
    if (!e.empty() && !cats.is_underlay(e.category)) boxes.push_back(e.box);
  if (boxes.size() < 2) return 0.0;
  double sum = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < boxes.size(); ++i)
    for (std::size_t j = i + 1; j < boxes.size(); ++j, ++pairs) sum += iou(boxes[i], boxes[j], grid);
  return sum / pairs;
}

double occ(const Layout& layout, const SaliencyMap& saliency, const CategorySet& cats, int grid,
           const Options& opts) {
  const Raster u = union_of(layout, grid, [&](const LayoutElement& e) {
    return !(opts.occ_non_underlay_only && cats.is_underlay(e.category));
  });
  double sum = 0.0;
  long n = 0;
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j)
      if (u[static_cast<std::size_t>(i) * grid + j]) {
        sum += lookup(saliency, i, j, grid);
        ++n;
      }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

std::optional<double> uti(const Layout& layout, const SaliencyMap& saliency, double s, int grid) {
  const Raster u = union_of(layout, grid, [](const LayoutElement&) { return true; });
  long calm = 0, covered = 0;
  for (int i = 0; i < grid; ++i)
    for (int j = 0; j < grid; ++j)
      if (lookup(saliency, i, j, grid) <= s) {
        ++calm;
        covered += u[static_cast<std::size_t>(i) * grid + j];
      }
  if (calm == 0) return std::nullopt;
  return static_cast<double>(covered) / static_cast<double>(calm);
}

}  // namespace pixel

LayoutScores score_layout(const Layout& layout, const CanvasBundle& bundle, const CategorySet& cats,
                          const EvalSettings& settings) {
  LayoutScores s;
  const auto& o = settings.options;
  if (settings.method == Method::analytic) {
    s.occ = occ(layout, bundle.saliency, cats, o);
    s.ove = ove(layout, cats);
    s.uti = uti(layout, bundle.saliency, o.uti_threshold);
    s.underlay_ratios = underlay_ratios(layout, cats);
  } else {
    s.occ = pixel::occ(layout, bundle.saliency, cats, settings.grid, o);
    s.ove = pixel::ove(layout, cats, settings.grid);
    s.uti = pixel::uti(layout, bundle.saliency, o.uti_threshold, settings.grid);
    s.underlay_ratios = pixel::underlay_ratios(layout, cats, settings.grid);
  }
  // Readability and size are defined on the source pixels / box fields directly.
  s.rea = rea(layout, bundle.canvas, cats);
  s.sma = sma(layout);
  return s;
}

Report evaluate_corpus(std::span<const Layout> layouts, std::span<const CanvasBundle* const> bundles,
                       const CategorySet& cats, const EvalSettings& settings) {
  if (layouts.size() != bundles.size()) throw DomainError("layouts and bundles differ in length");
  Report r;
  r.n_layouts = static_cast<int>(layouts.size());
  r.per_layout.resize(layouts.size());
  const int threads = std::max(1, std::min<int>(settings.threads, static_cast<int>(layouts.size())));
  auto work = [&](int tid) {
    for (std::size_t i = static_cast<std::size_t>(tid); i < layouts.size(); i += static_cast<std::size_t>(threads))
      r.per_layout[i] = score_layout(layouts[i], *bundles[i], cats, settings);
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work, t);
  }
  for (const auto* b : bundles) r.ids.push_back(b->id);

  std::vector<std::optional<double>> occ_v, rea_v, ove_v, sma_v, uti_v;
  double und_sum = 0.0, und_strict = 0.0;
  for (const auto& s : r.per_layout) {
    occ_v.push_back(s.occ);
    rea_v.push_back(s.rea);
    ove_v.push_back(s.ove);
    sma_v.push_back(s.sma);
    uti_v.push_back(s.uti);
    for (double v : s.underlay_ratios) {
      und_sum += v;
      und_strict += v >= 1.0 - settings.options.und_strict_tol ? 1.0 : 0.0;
      ++r.n_underlays;
    }
  }
  r.occ = mean_of(occ_v);
  r.rea = mean_of(rea_v);
  r.ove = mean_of(ove_v);
  r.sma = mean_of(sma_v);
  r.uti = mean_of(uti_v);
  if (r.n_underlays > 0) {
    r.und_l = und_sum / r.n_underlays;
    r.und_s = und_strict / r.n_underlays;
  }
  return r;
}

namespace {

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::string csv_value(const std::optional<double>& v) {
  if (!v) return "n/a";
  std::ostringstream os;
  os << std::setprecision(10) << *v;
  return os.str();
}

}  // namespace

std::string report_to_json(const Report& r) {
  nlohmann::json j;
  j["occ"] = opt(r.occ);
  j["rea"] = opt(r.rea);
  j["und_l"] = opt(r.und_l);
  j["und_s"] = opt(r.und_s);
  j["ove"] = opt(r.ove);
  j["sma"] = opt(r.sma);
  j["uti"] = opt(r.uti);
  j["n_layouts"] = r.n_layouts;
  j["n_underlays"] = r.n_underlays;
  j["per_layout"] = nlohmann::json::array();
  for (std::size_t i = 0; i < r.per_layout.size(); ++i) {
    const auto& s = r.per_layout[i];
    j["per_layout"].push_back({{"id", i < r.ids.size() ? r.ids[i] : std::to_string(i)},
                               {"occ", opt(s.occ)},
                               {"rea", opt(s.rea)},
                               {"ove", opt(s.ove)},
                               {"sma", opt(s.sma)},
                               {"uti", opt(s.uti)},
                               {"underlay_ratios", s.underlay_ratios}});
  }
  return j.dump(2);
}

std::string report_to_csv(const Report& r) {
  std::ostringstream os;
  os << "id,occ,rea,ove,sma,uti,n_underlays,und_l\n";
  for (std::size_t i = 0; i < r.per_layout.size(); ++i) {
    const auto& s = r.per_layout[i];
    std::optional<double> und_l;
    if (!s.underlay_ratios.empty()) {
      double sum = 0.0;
      for (double v : s.underlay_ratios) sum += v;
      und_l = sum / static_cast<double>(s.underlay_ratios.size());
    }
    os << (i < r.ids.size() ? r.ids[i] : std::to_string(i)) << ',' << csv_value(s.occ) << ',' << csv_value(s.rea)
       << ',' << csv_value(s.ove) << ',' << csv_value(s.sma) << ',' << csv_value(s.uti) << ','
       << s.underlay_ratios.size() << ',' << csv_value(und_l) << '\n';
  }
  os << "corpus," << csv_value(r.occ) << ',' << csv_value(r.rea) << ',' << csv_value(r.ove) << ','
     << csv_value(r.sma) << ',' << csv_value(r.uti) << ',' << r.n_underlays << ',' << csv_value(r.und_l) << '\n';
  return os.str();
}

}  // namespace layoutdiff::metrics
