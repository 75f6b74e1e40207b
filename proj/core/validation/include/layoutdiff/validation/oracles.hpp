#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "layoutdiff/layout.hpp"
#include "layoutdiff/model.hpp"
#include "layoutdiff/rng.hpp"
#include "layoutdiff/saliency.hpp"

/// Independent reference implementations used by the tests and the
/// acceptance run. Deliberately naive.
namespace layoutdiff::validation {

/// Components by repeated min-label relaxation over 4-neighbors until a
/// fixed point, then exhaustive min/max over each component's pixels.
SalientBoxSet reference_boxes(const BinaryMask& mask, int k_max, double min_area);

/// Random mask of rectangles, ellipses and speckle noise.
BinaryMask random_blob_mask(Rng& rng, int height, int width, int blobs);

/// Random saliency field: smooth blobs plus a noisy floor, values in [0, 1].
SaliencyMap random_saliency(Rng& rng, int height, int width);

/// Random layout over `cats`; about half the underlays get a text element
/// placed strictly inside them so strict underlay coverage is exercised.
Layout random_layout(Rng& rng, const CategorySet& cats, int max_elements);

/// d_model 8, two slots, one layer per stack.
ModelConfig toy_config();

struct GradCheckResult {
  /// Largest relative error per top-level parameter group.
  std::map<std::string, double> group_error;
  /// Tensors whose analytic gradient is identically zero.
  std::vector<std::string> untouched;
  double max_error = 0.0;
  long probes = 0;
};

/// Fourth-order central differences against the tape gradient for every
/// scalar of every parameter of a toy model. The noise head is randomized so the
/// whole network is on the gradient path; the batch mixes a sample with
/// salient boxes and one without.
GradCheckResult gradient_check(const ModelConfig& cfg, std::uint64_t seed, double step = 1e-3);

}  // namespace layoutdiff::validation
