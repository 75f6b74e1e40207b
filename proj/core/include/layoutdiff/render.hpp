#pragma once

#include <array>

#include "layoutdiff/image.hpp"
#include "layoutdiff/layout.hpp"

namespace layoutdiff {

struct RenderStyle {
  double alpha = 0.4;
  /// Outline thickness in pixels for non-underlay elements.
  int outline = 1;
};

/// logo blue, text green, underlay orange, embellishment purple, anything
/// else gray.
std::array<double, 3> category_color(const CategorySet& cats, int category);

/// Underlays are filled first; every other element then gets a translucent
/// fill and an opaque outline. Boxes are clipped to the canvas. A gray
/// canvas is promoted to RGB.
Image render(const Layout& layout, const Image& canvas, const CategorySet& cats, const RenderStyle& style = {});

}  // namespace layoutdiff
