#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "layoutdiff/image.hpp"
#include "layoutdiff/layout.hpp"

namespace layoutdiff {

/// Single-channel importance map with values in [0, 1].
class SaliencyMap {
 public:
  SaliencyMap() = default;
  /// Throws DomainError if `pixels` is empty, not single-channel, or out of range.
  explicit SaliencyMap(Image pixels);
  static SaliencyMap constant(int height, int width, double value);
  static SaliencyMap load(const std::filesystem::path& path);

  int height() const { return pixels_.height; }
  int width() const { return pixels_.width; }
  double at(int y, int x) const { return pixels_.at(y, x); }
  const Image& image() const { return pixels_; }

  bool operator==(const SaliencyMap&) const = default;

 private:
  Image pixels_;
};

struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  std::uint8_t at(int y, int x) const { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int y, int x) { return bits[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const BinaryMask&) const = default;
};

struct SalientBoxSet {
  std::vector<Box> boxes;
  double threshold_used = 0.5;

  bool operator==(const SalientBoxSet&) const = default;
};

struct BoxExtractionParams {
  double threshold = 0.5;
  int k_max = 8;
  /// Minimum component area as a fraction of the canvas.
  double min_area = 0.001;
};

/// 1 where the pixel is strictly above `s`, 0 where it is at or below.
BinaryMask binarize(const SaliencyMap& map, double s);

/// One minimal enclosing rectangle per 4-connected component of 1-pixels,
/// largest components first (ties: earliest pixel in raster order), at most
/// `k_max`, components smaller than `min_area` dropped.
SalientBoxSet extract_boxes(const BinaryMask& mask, int k_max, double min_area);

SalientBoxSet extract_boxes(const SaliencyMap& map, const BoxExtractionParams& params);

/// Pixelwise maximum; throws DomainError on shape mismatch.
SaliencyMap fuse_max(const SaliencyMap& a, const SaliencyMap& b);

std::string boxes_to_json(const SalientBoxSet& set);

}  // namespace layoutdiff
