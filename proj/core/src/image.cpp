#include "layoutdiff/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <png.h>

#include "layoutdiff/error.hpp"

namespace layoutdiff {

namespace {

struct Span1D {
  int first;
  std::vector<double> weights;
};

// For each output cell, the input cells it overlaps and the overlap lengths
// (in input-pixel units), normalized to sum to 1.
std::vector<Span1D> area_weights(int in, int out) {
  std::vector<Span1D> spans(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    const double lo = o * scale;
    const double hi = (o + 1) * scale;
    const int first = static_cast<int>(std::floor(lo));
    const int last = std::min(in - 1, static_cast<int>(std::ceil(hi)) - 1);
    auto& s = spans[static_cast<std::size_t>(o)];
    s.first = first;
    double total = 0.0;
    for (int i = first; i <= last; ++i) {
      const double w = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
      s.weights.push_back(std::max(w, 0.0));
      total += s.weights.back();
    }
    for (auto& w : s.weights) w /= total;
  }
  return spans;
}

}  // namespace

Image resize_area(const Image& src, int height, int width) {
  if (height <= 0 || width <= 0) throw DomainError("resize target must be positive");
  if (src.empty()) throw DomainError("cannot resize an empty image");
  if (src.height == height && src.width == width) return src;
  const auto ys = area_weights(src.height, height);
  const auto xs = area_weights(src.width, width);
  Image out(height, width, src.channels);
  for (int y = 0; y < height; ++y) {
    const auto& sy = ys[static_cast<std::size_t>(y)];
    for (int x = 0; x < width; ++x) {
      const auto& sx = xs[static_cast<std::size_t>(x)];
      for (int c = 0; c < src.channels; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < sy.weights.size(); ++i)
          for (std::size_t j = 0; j < sx.weights.size(); ++j)
            acc += sy.weights[i] * sx.weights[j] *
                   src.at(sy.first + static_cast<int>(i), sx.first + static_cast<int>(j), c);
        out.at(y, x, c) = acc;
      }
    }
  }
  return out;
}

Image mirror(const Image& src, bool vertical, bool horizontal) {
  Image out(src.height, src.width, src.channels);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      for (int c = 0; c < src.channels; ++c)
        out.at(y, x, c) = src.at(vertical ? src.height - 1 - y : y, horizontal ? src.width - 1 - x : x, c);
  return out;
}

Image luminance(const Image& rgb) {
  if (rgb.channels != 3) throw DomainError("luminance needs an RGB image");
  Image out(rgb.height, rgb.width, 1);
  for (int y = 0; y < rgb.height; ++y)
    for (int x = 0; x < rgb.width; ++x)
      out.at(y, x) = 0.299 * rgb.at(y, x, 0) + 0.587 * rgb.at(y, x, 1) + 0.114 * rgb.at(y, x, 2);
  return out;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

Image read_png(const std::filesystem::path& path, int channels) {
  if (channels != 1 && channels != 3) throw DomainError("read_png supports 1 or 3 channels");
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw IoError("cannot read PNG " + path.string() + ": " + img.message);
  img.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError("cannot decode PNG " + path.string() + ": " + img.message);
  }
  Image out(static_cast<int>(img.height), static_cast<int>(img.width), channels);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = buffer[i] / 255.0;
  return out;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw DomainError("write_png supports 1 or 3 channels");
  std::vector<std::uint8_t> buffer(image.data.size());
  std::transform(image.data.begin(), image.data.end(), buffer.begin(), to_byte);
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, buffer.data(), 0, nullptr))
    throw IoError("cannot write PNG " + path.string() + ": " + img.message);
}

}  // namespace layoutdiff
