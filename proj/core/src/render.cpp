#include "layoutdiff/render.hpp"

#include <algorithm>

namespace layoutdiff {

std::array<double, 3> category_color(const CategorySet& cats, int category) {
  const std::string& name = cats.valid(category) ? cats.name(category) : std::string();
  if (name == "logo") return {0.15, 0.35, 0.90};
  if (name == "text") return {0.10, 0.70, 0.25};
  if (name == "underlay") return {1.00, 0.55, 0.10};
  if (name == "embellishment") return {0.60, 0.20, 0.80};
  return {0.5, 0.5, 0.5};
}

namespace {

void fill(Image& img, const PixelRect& r, const std::array<double, 3>& color, double alpha) {
  for (int y = r.y0; y < r.y1; ++y)
    for (int x = r.x0; x < r.x1; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = (1.0 - alpha) * img.at(y, x, c) + alpha * color[static_cast<std::size_t>(c)];
}

void outline(Image& img, const PixelRect& r, const std::array<double, 3>& color, int thickness) {
  for (int y = r.y0; y < r.y1; ++y)
    for (int x = r.x0; x < r.x1; ++x) {
      const bool edge = x - r.x0 < thickness || r.x1 - 1 - x < thickness || y - r.y0 < thickness ||
                        r.y1 - 1 - y < thickness;
      if (edge)
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = color[static_cast<std::size_t>(c)];
    }
}

}  // namespace

Image render(const Layout& layout, const Image& canvas, const CategorySet& cats, const RenderStyle& style) {
  Image out = canvas;
  if (canvas.channels != 3) {
    out = Image(canvas.height, canvas.width, 3);
    for (int y = 0; y < canvas.height; ++y)
      for (int x = 0; x < canvas.width; ++x)
        for (int c = 0; c < 3; ++c) out.at(y, x, c) = canvas.at(y, x, 0);
  }
  for (const auto& el : layout.elements)
    if (!el.empty() && cats.is_underlay(el.category))
      fill(out, pixel_rect(el.box, out.height, out.width), category_color(cats, el.category), style.alpha);
  for (const auto& el : layout.elements) {
    if (el.empty() || cats.is_underlay(el.category)) continue;
    const PixelRect r = pixel_rect(el.box, out.height, out.width);
    const auto color = category_color(cats, el.category);
    fill(out, r, color, style.alpha);
    outline(out, r, color, std::max(1, style.outline));
  }
  return out;
}

}  // namespace layoutdiff
