#pragma once

#include <string>

#include "layoutdiff/image.hpp"
#include "layoutdiff/saliency.hpp"

namespace layoutdiff {

/// The condition of one sample at source resolution.
struct CanvasBundle {
  std::string id;
  Image canvas;
  SaliencyMap saliency;
  /// Derived from `saliency`; cached at load time.
  SalientBoxSet boxes;
};

}  // namespace layoutdiff
