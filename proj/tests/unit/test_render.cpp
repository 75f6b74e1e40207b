#include <doctest.h>

#include "layoutdiff/render.hpp"

using namespace layoutdiff;

namespace {

Image gradient_canvas(int h, int w) {
  Image img(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = (y + 2 * x + 5 * c) % 17 / 17.0;
  return img;
}

}  // namespace

TEST_CASE("empty layout leaves the canvas untouched") {
  const Image canvas = gradient_canvas(30, 20);
  CHECK(render(Layout{}, canvas, CategorySet::poster()) == canvas);
}

TEST_CASE("rendering is deterministic and clips at the edges") {
  const CategorySet cats = CategorySet::poster();
  const Image canvas = gradient_canvas(40, 30);
  Layout l;
  l.elements = {{3, {0.0, 0.0, 0.6, 0.5}}, {2, {1.0, 1.0, 0.5, 0.3}}, {1, {0.5, 0.5, 1.4, 0.1}}};
  const Image a = render(l, canvas, cats), b = render(l, canvas, cats);
  CHECK(a == b);
  CHECK(a.height == 40);
  CHECK(a.width == 30);
  CHECK(a.channels == 3);
  CHECK(a != canvas);
}

TEST_CASE("gray canvases are promoted to RGB") {
  Layout l;
  l.elements = {{1, {0.5, 0.5, 0.5, 0.5}}};
  const Image out = render(l, Image(10, 10, 1, 0.5), CategorySet::poster());
  CHECK(out.channels == 3);
}

TEST_CASE("text outlines are never covered by underlay fill") {
  const CategorySet cats = CategorySet::poster();
  const Image canvas(60, 60, 3, 1.0);
  Layout text_only, both;
  text_only.elements = {{2, {0.5, 0.5, 0.4, 0.2}}};
  // Listed before the underlay on purpose: draw order must not follow input order.
  both.elements = {{2, {0.5, 0.5, 0.4, 0.2}}, {3, {0.5, 0.5, 0.6, 0.4}}};
  const Image t = render(text_only, canvas, cats), u = render(both, canvas, cats);
  const PixelRect r = pixel_rect({0.5, 0.5, 0.4, 0.2}, 60, 60);
  const auto green = category_color(cats, 2);
  int outline = 0;
  for (int y = r.y0; y < r.y1; ++y)
    for (int x = r.x0; x < r.x1; ++x) {
      if (y != r.y0 && y != r.y1 - 1 && x != r.x0 && x != r.x1 - 1) continue;
      ++outline;
      for (int c = 0; c < 3; ++c) {
        CHECK(u.at(y, x, c) == doctest::Approx(green[static_cast<std::size_t>(c)]));
        CHECK(t.at(y, x, c) == doctest::Approx(green[static_cast<std::size_t>(c)]));
      }
    }
  CHECK(outline > 0);
}

TEST_CASE("palette") {
  const CategorySet cats = CategorySet::poster_with_embellishment();
  CHECK(category_color(cats, cats.index_of("logo")) != category_color(cats, cats.index_of("text")));
  CHECK(category_color(cats, cats.index_of("underlay")) != category_color(cats, cats.index_of("embellishment")));
}
