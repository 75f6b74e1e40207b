#include <doctest.h>

#include "layoutdiff/error.hpp"
#include "layoutdiff/saliency.hpp"
#include "layoutdiff/validation/oracles.hpp"

using namespace layoutdiff;

namespace {

BinaryMask blank(int h, int w) { return {h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w, 0)}; }

void fill(BinaryMask& m, int r0, int r1, int c0, int c1) {
  for (int y = r0; y <= r1; ++y)
    for (int x = c0; x <= c1; ++x) m.at(y, x) = 1;
}

}  // namespace

TEST_CASE("binarize is strict at the threshold") {
  CHECK(binarize(SaliencyMap::constant(4, 4, 0.0), 0.5) == blank(4, 4));
  const BinaryMask ones = binarize(SaliencyMap::constant(4, 4, 0.6), 0.5);
  for (auto b : ones.bits) CHECK(b == 1);
  const BinaryMask at = binarize(SaliencyMap::constant(4, 4, 0.5), 0.5);
  for (auto b : at.bits) CHECK(b == 0);
  CHECK_THROWS_AS(binarize(SaliencyMap::constant(2, 2, 0.5), 1.5), DomainError);
}

TEST_CASE("binarize is monotone in the threshold") {
  Rng rng(5);
  const SaliencyMap m = validation::random_saliency(rng, 40, 30);
  const BinaryMask lo = binarize(m, 0.3), hi = binarize(m, 0.6);
  for (std::size_t i = 0; i < lo.bits.size(); ++i) CHECK(hi.bits[i] <= lo.bits[i]);
}

TEST_CASE("solid rectangle gives its exact normalized box") {
  BinaryMask m = blank(100, 100);
  fill(m, 20, 39, 10, 29);
  const SalientBoxSet s = extract_boxes(m, 8, 0.001);
  REQUIRE(s.boxes.size() == 1);
  const Box want{0.20, 0.30, 0.20, 0.20};
  for (int k = 0; k < 4; ++k) CHECK(std::abs(s.boxes[0][k] - want[k]) <= 1e-12);
  CHECK(extract_boxes(blank(10, 10), 8, 0.001).boxes.empty());
}

TEST_CASE("one box per 4-connected component, largest first") {
  BinaryMask m = blank(50, 50);
  fill(m, 0, 4, 0, 4);      // 25 px
  fill(m, 10, 29, 10, 19);  // 200 px
  m.at(5, 5) = 1;           // diagonal neighbor only: separate, below min_area
  const auto s = extract_boxes(m, 8, 0.001);
  REQUIRE(s.boxes.size() == 2);
  CHECK(s.boxes[0] == Box::from_edges(0.2, 0.2, 0.4, 0.6));
  CHECK(s.boxes[1] == Box::from_edges(0.0, 0.0, 0.1, 0.1));
  CHECK(extract_boxes(m, 1, 0.001).boxes.size() == 1);
  CHECK(extract_boxes(m, 8, 0.0).boxes.size() == 3);
}

TEST_CASE("extract_boxes agrees with the label-propagation oracle") {
  Rng rng(11);
  for (int i = 0; i < 60; ++i) {
    const BinaryMask m = validation::random_blob_mask(rng, rng.uniform_int(8, 64), rng.uniform_int(8, 64), rng.uniform_int(1, 6));
    CHECK(extract_boxes(m, 8, 0.001) == validation::reference_boxes(m, 8, 0.001));
    CHECK(extract_boxes(m, 100, 0.0) == validation::reference_boxes(m, 100, 0.0));
  }
}

TEST_CASE("every box is the tightest cover of its component") {
  Rng rng(12);
  for (int i = 0; i < 20; ++i) {
    const BinaryMask m = validation::random_blob_mask(rng, 40, 40, 4);
    const auto s = extract_boxes(m, 100, 0.0);
    int covered = 0, ones = 0;
    for (int y = 0; y < m.height; ++y)
      for (int x = 0; x < m.width; ++x) {
        if (!m.at(y, x)) continue;
        ++ones;
        const double cx = (x + 0.5) / m.width, cy = (y + 0.5) / m.height;
        for (const auto& b : s.boxes)
          if (cx > b.left() && cx < b.right() && cy > b.top() && cy < b.bottom()) {
            ++covered;
            break;
          }
      }
    CHECK(covered == ones);
    for (const auto& b : s.boxes) {
      // Edges sit on pixel boundaries.
      CHECK(b.left() * m.width == doctest::Approx(std::round(b.left() * m.width)));
      CHECK(b.bottom() * m.height == doctest::Approx(std::round(b.bottom() * m.height)));
    }
  }
}

TEST_CASE("fuse_max laws") {
  Rng rng(2);
  const SaliencyMap a = validation::random_saliency(rng, 20, 30), b = validation::random_saliency(rng, 20, 30),
                    c = validation::random_saliency(rng, 20, 30);
  CHECK(fuse_max(a, a) == a);
  CHECK(fuse_max(SaliencyMap::constant(20, 30, 0.0), a) == a);
  CHECK(fuse_max(a, b) == fuse_max(b, a));
  CHECK(fuse_max(fuse_max(a, b), c) == fuse_max(a, fuse_max(b, c)));
  CHECK_THROWS_AS(fuse_max(a, SaliencyMap::constant(3, 3, 0.0)), DomainError);
}

TEST_CASE("saliency values outside [0, 1] are rejected") {
  Image img(2, 2, 1, 0.5);
  img.at(1, 1) = 1.2;
  CHECK_THROWS_AS(SaliencyMap{img}, DomainError);
}
