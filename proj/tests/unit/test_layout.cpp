#include <doctest.h>

#include <cmath>

#include "layoutdiff/error.hpp"
#include "layoutdiff/layout.hpp"
#include "layoutdiff/rng.hpp"
#include "layoutdiff/validation/oracles.hpp"

using namespace layoutdiff;

namespace {

CategorySet three() { return CategorySet({"a", "b", "c"}, {"c"}, {"b"}); }

}  // namespace

TEST_CASE("tokenize scales one-hot and box into [-1, 1]") {
  Layout l;
  l.elements = {{1, {0.5, 0.5, 0.5, 0.5}}};
  const LayoutTensor t = tokenize(l, three(), 1);
  REQUIRE(t.rows() == 1);
  REQUIRE(t.cols() == 8);
  const double want[] = {-1, 1, -1, -1, 0, 0, 0, 0};
  for (int j = 0; j < 8; ++j) CHECK(t.values(0, j) == want[j]);
}

TEST_CASE("padding rows are one fixed vector") {
  const LayoutTensor t = tokenize(Layout{}, three(), 2);
  const double want[] = {1, -1, -1, -1, -1, -1, -1, -1};
  for (int r = 0; r < 2; ++r)
    for (int j = 0; j < 8; ++j) CHECK(t.values(r, j) == want[j]);

  Layout l;
  l.elements = {{2, {0.3, 0.3, 0.1, 0.2}}};
  const LayoutTensor u = tokenize(l, three(), 5);
  for (int r = 2; r < 5; ++r) CHECK(u.values.row(r) == u.values.row(1));
}

TEST_CASE("more elements than slots is a capacity error") {
  Layout l;
  for (int i = 0; i < 12; ++i) l.elements.push_back({1, {0.5, 0.5, 0.1, 0.1}});
  CHECK_THROWS_AS(tokenize(l, three(), 11), CapacityError);
}

TEST_CASE("detokenize: argmax with ties going to empty") {
  const CategorySet cats = three();
  CHECK(detokenize(LayoutTensor{Mat::Zero(3, 8)}, cats).elements.empty());

  Mat m = Mat::Zero(1, 8);
  m.row(0).head(4) << -1, 0.2, 0.9, -0.5;
  // (0.2, 0.9, -0.5) after the empty column: the largest is index 2.
  CHECK(detokenize(LayoutTensor{m}, cats).elements.at(0).category == 2);
  m.row(0).head(4) << -1, 0.9, 0.2, -0.5;
  CHECK(detokenize(LayoutTensor{m}, cats).elements.at(0).category == 1);

  Mat bad = Mat::Zero(1, 8);
  bad(0, 5) = std::nan("");
  CHECK_THROWS_AS(detokenize(LayoutTensor{bad}, cats), NumericError);
}

TEST_CASE("roundtrip and canonical form") {
  const CategorySet cats = CategorySet::poster();
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Layout l = canonicalize(validation::random_layout(rng, cats, 11));
    const Layout back = detokenize(tokenize(l, cats, 11), cats);
    REQUIRE(back.size() == l.size());
    for (std::size_t i = 0; i < l.size(); ++i) {
      CHECK(back.elements[i].category == l.elements[i].category);
      for (int k = 0; k < 4; ++k) CHECK(std::abs(back.elements[i].box[k] - l.elements[i].box[k]) <= 1e-12);
    }
    CHECK(canonicalize(l) == l);
  }

  Layout l;
  l.elements = {{0, {}}, {2, {0.2, 0.2, 0.1, 0.1}}, {0, {}}};
  const Layout c = canonicalize(l);
  REQUIRE(c.elements.size() == 3);
  CHECK(c.elements[0].category == 2);
  CHECK(c.elements[1].empty());
  CHECK(c.elements[2].empty());
}

TEST_CASE("clamp_box keeps the box on the canvas") {
  const Box b = clamp_box({-0.1, 0.5, 1.3, 0.2});
  CHECK(b.x == doctest::Approx(0.0));
  CHECK(b.y == doctest::Approx(0.5));
  CHECK(b.w == doctest::Approx(1.0));
  CHECK(b.h == doctest::Approx(0.2));
}

TEST_CASE("signed scaling is a bijection") {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.uniform();
    CHECK(std::abs(to_unit(to_signed(v)) - v) <= 1e-12);
  }
}

TEST_CASE("layout json roundtrip and unknown labels") {
  const CategorySet cats = CategorySet::poster();
  Layout l;
  l.canvas_h = 192;
  l.canvas_w = 128;
  l.elements = {{1, {0.25, 0.125, 0.2, 0.1}}, {3, {0.5, 0.5, 0.4, 0.2}}};
  CHECK(layout_from_json(layout_to_json(l, cats), cats) == l);
  CHECK_THROWS_AS(cats.index_of("banner"), DomainError);
}
