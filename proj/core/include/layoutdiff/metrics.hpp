#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "layoutdiff/bundle.hpp"
#include "layoutdiff/layout.hpp"

namespace layoutdiff::metrics {

struct Options {
  /// Non-salient threshold for utilization.
  double uti_threshold = 0.5;
  /// Occlusion over non-underlay elements only (default: every element).
  bool occ_non_underlay_only = false;
  /// Ratio tolerance for the strict underlay test.
  double und_strict_tol = 1e-6;
};

/// area(a ∩ b) / area(a); 0 when a has zero area.
double overlap_ratio(const Box& a, const Box& b);
double iou(const Box& a, const Box& b);

/// Best overlap ratio of any non-underlay element against each underlay, in
/// underlay order.
std::vector<double> underlay_ratios(const Layout& layout, const CategorySet& cats);

struct UnderlayScore {
  std::optional<double> loose;
  std::optional<double> strict;
};
/// Single-layout underlay scores; not applicable without underlays.
UnderlayScore und(const Layout& layout, const CategorySet& cats, double strict_tol = 1e-6);

/// Mean pairwise IoU of non-underlay elements; 0 for fewer than two.
double ove(const Layout& layout, const CategorySet& cats);

/// Mean saliency over the union of element boxes (exact area integration of
/// the piecewise-constant map); 0 for an empty union.
double occ(const Layout& layout, const SaliencyMap& saliency, const CategorySet& cats, const Options& opts = {});

/// Mean luminance-gradient magnitude over pixels inside text and outside all
/// underlays; not applicable if that region is empty.
std::optional<double> rea(const Layout& layout, const Image& canvas, const CategorySet& cats);

/// Fraction of elements with area < 0.001 or width < 0.02 or height < 0.02.
std::optional<double> sma(const Layout& layout);

/// Covered fraction of the non-salient region {saliency <= s}.
std::optional<double> uti(const Layout& layout, const SaliencyMap& saliency, double s = 0.5);

struct LayoutScores {
  std::optional<double> occ, rea, ove, sma, uti;
  std::vector<double> underlay_ratios;
};

struct Report {
  std::optional<double> occ, rea, und_l, und_s, ove, sma, uti;
  int n_layouts = 0;
  int n_underlays = 0;
  std::vector<std::string> ids;
  std::vector<LayoutScores> per_layout;
};

enum class Method { analytic, pixel_grid };

struct EvalSettings {
  Method method = Method::analytic;
  /// Raster side for the pixel-grid path.
  int grid = 512;
  Options options;
  int threads = 1;
};

LayoutScores score_layout(const Layout& layout, const CanvasBundle& bundle, const CategorySet& cats,
                          const EvalSettings& settings = {});

/// Per-layout means for Occ/Rea/Ove/Sma/Uti, corpus-wide per-underlay means
/// for Und. Throws DomainError when the lists differ in length.
Report evaluate_corpus(std::span<const Layout> layouts, std::span<const CanvasBundle* const> bundles,
                       const CategorySet& cats, const EvalSettings& settings = {});

std::string report_to_json(const Report& report);
std::string report_to_csv(const Report& report);

/// Brute-force raster versions: every quantity is a count over a grid x grid
/// lattice of cell centers; saliency is looked up by nearest source pixel.
namespace pixel {

double overlap_ratio(const Box& a, const Box& b, int grid);
double iou(const Box& a, const Box& b, int grid);
std::vector<double> underlay_ratios(const Layout& layout, const CategorySet& cats, int grid);
double ove(const Layout& layout, const CategorySet& cats, int grid);
double occ(const Layout& layout, const SaliencyMap& saliency, const CategorySet& cats, int grid,
           const Options& opts = {});
std::optional<double> uti(const Layout& layout, const SaliencyMap& saliency, double s, int grid);

}  // namespace pixel

}  // namespace layoutdiff::metrics
