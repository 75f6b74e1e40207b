#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace layoutdiff {

/// Interleaved H x W x C image with intensities in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

  bool empty() const { return data.empty(); }
  double& at(int y, int x, int c = 0) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  double at(int y, int x, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool operator==(const Image&) const = default;
};

/// Area-weighted resampling: every output pixel is the mean of the input
/// pixels it covers, weighted by fractional overlap. Preserves mean intensity.
Image resize_area(const Image& src, int height, int width);

/// Reverses row order (vertical) and/or column order (horizontal).
Image mirror(const Image& src, bool vertical, bool horizontal);

/// ITU-R 601 luma (0.299 R + 0.587 G + 0.114 B) as a single-channel image.
Image luminance(const Image& rgb);

/// Reads an 8-bit PNG, converting to the requested channel count (1 or 3),
/// and divides by 255.
Image read_png(const std::filesystem::path& path, int channels);

/// Writes 8-bit PNG; values are clamped and rounded to the nearest level.
void write_png(const std::filesystem::path& path, const Image& image);

std::uint8_t to_byte(double v);

}  // namespace layoutdiff
