#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "layoutdiff/linalg.hpp"

namespace layoutdiff {

/// Ordered category labels. Index 0 is always the reserved "empty" category
/// used for padding slots.
class CategorySet {
 public:
  /// `names` excludes "empty"; it is prepended automatically.
  CategorySet(const std::vector<std::string>& names, const std::vector<std::string>& underlay_names,
              const std::vector<std::string>& text_names);

  /// {empty, logo, text, underlay}.
  static CategorySet poster();
  /// {empty, logo, text, underlay, embellishment}.
  static CategorySet poster_with_embellishment();

  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(int index) const;
  const std::vector<std::string>& names() const { return names_; }
  /// Throws DomainError for unknown labels.
  int index_of(std::string_view name) const;
  bool valid(int index) const { return index >= 0 && index < size(); }
  bool is_underlay(int index) const;
  bool is_text(int index) const;
  const std::vector<int>& underlay_indices() const { return underlay_; }
  const std::vector<int>& text_indices() const { return text_; }

  bool operator==(const CategorySet&) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<int> underlay_;
  std::vector<int> text_;
};

/// Normalized box; (x, y) is the box center, all four fields are canvas fractions.
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double left() const { return x - 0.5 * w; }
  double right() const { return x + 0.5 * w; }
  double top() const { return y - 0.5 * h; }
  double bottom() const { return y + 0.5 * h; }
  double area() const { return w * h; }

  double& operator[](int i) { return i == 0 ? x : i == 1 ? y : i == 2 ? w : h; }
  double operator[](int i) const { return i == 0 ? x : i == 1 ? y : i == 2 ? w : h; }

  static Box from_edges(double left, double top, double right, double bottom) {
    return {0.5 * (left + right), 0.5 * (top + bottom), right - left, bottom - top};
  }

  bool operator==(const Box&) const = default;
};

struct LayoutElement {
  int category = 0;
  Box box;

  bool empty() const { return category == 0; }
  bool operator==(const LayoutElement&) const = default;
};

inline constexpr int kDefaultMaxElements = 11;

struct Layout {
  std::vector<LayoutElement> elements;
  int canvas_h = 0;
  int canvas_w = 0;

  std::size_t size() const { return elements.size(); }
  bool operator==(const Layout&) const = default;
};

/// Continuous encoding: n_max rows of [scaled one-hot category | scaled box],
/// every entry in [-1, 1].
struct LayoutTensor {
  Mat values;

  int rows() const { return static_cast<int>(values.rows()); }
  int cols() const { return static_cast<int>(values.cols()); }
  bool operator==(const LayoutTensor& o) const {
    return values.rows() == o.values.rows() && values.cols() == o.values.cols() && values == o.values;
  }
};

/// [0,1] -> [-1,1] and back.
inline double to_signed(double v) { return 2.0 * v - 1.0; }
inline double to_unit(double v) { return 0.5 * (v + 1.0); }

inline int feature_dim(const CategorySet& cats) { return cats.size() + 4; }

LayoutTensor tokenize(const Layout& layout, const CategorySet& cats, int n_max);

/// Decodes every row, including empty slots (which get a zero box).
std::vector<LayoutElement> decode_rows(const LayoutTensor& tensor, const CategorySet& cats);

/// Drops empty rows and keeps order. Throws NumericError on NaN/Inf.
Layout detokenize(const LayoutTensor& tensor, const CategorySet& cats);

Layout canonicalize(const Layout& layout);

Box clamp_box(const Box& box);

std::string layout_to_json(const Layout& layout, const CategorySet& cats);
Layout layout_from_json(std::string_view text, const CategorySet& cats);
void write_layout(const std::filesystem::path& path, const Layout& layout, const CategorySet& cats);
Layout read_layout(const std::filesystem::path& path, const CategorySet& cats);

}  // namespace layoutdiff

namespace layoutdiff {

/// Half-open pixel range [x0, x1) x [y0, y1) of pixels whose centers lie in
/// the box, clipped to the raster.
struct PixelRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool empty() const { return x0 >= x1 || y0 >= y1; }
  bool contains(int y, int x) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

PixelRect pixel_rect(const Box& box, int height, int width);

}  // namespace layoutdiff
