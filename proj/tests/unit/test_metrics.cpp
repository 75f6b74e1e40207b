#include <doctest.h>

#include <cmath>

#include "layoutdiff/error.hpp"
#include "layoutdiff/metrics.hpp"
#include "layoutdiff/validation/oracles.hpp"

using namespace layoutdiff;
namespace m = layoutdiff::metrics;

namespace {

const CategorySet kCats = CategorySet::poster();
constexpr int kLogo = 1, kText = 2, kUnder = 3;

Layout make(std::initializer_list<LayoutElement> els) {
  Layout l;
  l.elements = els;
  return l;
}

CanvasBundle bundle(int h, int w, double sal) {
  CanvasBundle b;
  b.id = "b";
  b.canvas = Image(h, w, 3, 0.5);
  b.saliency = SaliencyMap::constant(h, w, sal);
  return b;
}

}  // namespace

TEST_CASE("overlap ratio and IoU closed forms") {
  const Box a{0.25, 0.25, 0.5, 0.5}, b{0.5, 0.5, 0.5, 0.5};
  CHECK(m::overlap_ratio(a, b) == doctest::Approx(0.25));
  CHECK(m::overlap_ratio({0.5, 0.5, 0.1, 0.1}, {0.5, 0.5, 0.4, 0.4}) == doctest::Approx(1.0));
  CHECK(m::overlap_ratio({0.1, 0.1, 0.1, 0.1}, {0.8, 0.8, 0.1, 0.1}) == 0.0);
  CHECK(m::iou(a, b) == doctest::Approx(1.0 / 7.0));
  CHECK(m::iou(a, a) == doctest::Approx(1.0));
  CHECK(m::iou({0.1, 0.1, 0.1, 0.1}, {0.8, 0.8, 0.1, 0.1}) == 0.0);
  CHECK(m::pixel::overlap_ratio(a, b, 512) == doctest::Approx(0.25).epsilon(1e-2));
  CHECK(m::pixel::iou(a, b, 512) == doctest::Approx(1.0 / 7.0).epsilon(1e-2));
}

TEST_CASE("underlay scores") {
  const auto exact = m::und(make({{kText, {0.5, 0.5, 0.2, 0.1}}, {kUnder, {0.5, 0.5, 0.4, 0.3}}}), kCats);
  CHECK(*exact.loose == doctest::Approx(1.0));
  CHECK(*exact.strict == 1.0);
  const auto quarter = m::und(make({{kText, {0.25, 0.25, 0.5, 0.5}}, {kUnder, {0.5, 0.5, 0.5, 0.5}}}), kCats);
  CHECK(*quarter.loose == doctest::Approx(0.25));
  CHECK(*quarter.strict == 0.0);
  const auto none = m::und(make({{kText, {0.5, 0.5, 0.2, 0.1}}}), kCats);
  CHECK(!none.loose.has_value());
  CHECK(!none.strict.has_value());
}

TEST_CASE("occlusion of constant fields") {
  const Layout l = make({{kLogo, {0.3, 0.3, 0.2, 0.2}}, {kText, {0.6, 0.6, 0.3, 0.1}}});
  CHECK(m::occ(l, SaliencyMap::constant(40, 30, 0.0), kCats) == 0.0);
  CHECK(m::occ(l, SaliencyMap::constant(40, 30, 1.0), kCats) == doctest::Approx(1.0));
  CHECK(m::occ(l, SaliencyMap::constant(40, 30, 0.5), kCats) == doctest::Approx(0.5));
  CHECK(m::occ(Layout{}, SaliencyMap::constant(40, 30, 0.5), kCats) == 0.0);
}

TEST_CASE("readability over constructed canvases") {
  Image flat(40, 40, 3, 0.3);
  const Layout text = make({{kText, {0.5, 0.5, 0.5, 0.5}}});
  CHECK(*m::rea(text, flat, kCats) == 0.0);
  const Layout covered = make({{kText, {0.5, 0.5, 0.5, 0.5}}, {kUnder, {0.5, 0.5, 0.8, 0.8}}});
  CHECK(!m::rea(covered, flat, kCats).has_value());

  // Vertical step of height d between columns 19 and 20. Central differences
  // give |d|/2 on both columns next to the step, zero elsewhere.
  const double d = 0.6;
  Image step(40, 40, 3, 0.2);
  for (int y = 0; y < 40; ++y)
    for (int x = 20; x < 40; ++x)
      for (int c = 0; c < 3; ++c) step.at(y, x, c) = 0.2 + d;
  const double region = 20.0 * 20.0;  // pixels 10..29 squared
  const double want = (2.0 * 20.0 * (d / 2.0)) / region;
  CHECK(*m::rea(text, step, kCats) == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("small-element fraction uses OR semantics") {
  CHECK(*m::sma(make({{kLogo, {0.5, 0.5, 0.01, 0.01}}})) == 1.0);
  CHECK(*m::sma(make({{kLogo, {0.5, 0.5, 0.5, 0.5}}})) == 0.0);
  CHECK(*m::sma(make({{kLogo, {0.5, 0.5, 0.019, 0.9}}})) == 1.0);
  CHECK(*m::sma(make({{kLogo, {0.5, 0.5, 0.019, 0.9}}, {kText, {0.5, 0.5, 0.5, 0.5}}})) == 0.5);
  CHECK(!m::sma(Layout{}).has_value());
}

TEST_CASE("utilization") {
  const Layout quarter = make({{kLogo, {0.25, 0.25, 0.5, 0.5}}});
  CHECK(*m::uti(quarter, SaliencyMap::constant(32, 32, 0.0)) == doctest::Approx(0.25));
  CHECK(!m::uti(quarter, SaliencyMap::constant(32, 32, 1.0)).has_value());

  // Right half salient; the box covers 10% of the left half.
  Image img(100, 100, 1, 0.0);
  for (int y = 0; y < 100; ++y)
    for (int x = 50; x < 100; ++x) img.at(y, x) = 1.0;
  const SaliencyMap half(img);
  const Layout l = make({{kLogo, {0.25, 0.5, 0.25, 0.2}}});
  CHECK(*m::uti(l, half) == doctest::Approx(0.10));
  CHECK(*m::pixel::uti(l, half, 0.5, 512) == doctest::Approx(0.10).epsilon(1e-2));
}

TEST_CASE("corpus aggregation") {
  Rng rng(21);
  std::vector<Layout> ls;
  std::vector<CanvasBundle> bs(6);
  std::vector<const CanvasBundle*> ptrs;
  for (int i = 0; i < 6; ++i) {
    ls.push_back(validation::random_layout(rng, kCats, 8));
    bs[static_cast<std::size_t>(i)] = bundle(40, 30, 0.0);
    bs[static_cast<std::size_t>(i)].saliency = validation::random_saliency(rng, 40, 30);
    ptrs.push_back(&bs[static_cast<std::size_t>(i)]);
  }

  const m::Report one = m::evaluate_corpus(std::span(ls).first(1), std::span(ptrs).first(1), kCats);
  const m::LayoutScores s = m::score_layout(ls[0], bs[0], kCats);
  CHECK(one.occ == s.occ);
  CHECK(one.ove == s.ove);
  CHECK(one.uti == s.uti);

  std::vector<Layout> ls2 = ls;
  ls2.insert(ls2.end(), ls.begin(), ls.end());
  std::vector<const CanvasBundle*> ptrs2 = ptrs;
  ptrs2.insert(ptrs2.end(), ptrs.begin(), ptrs.end());
  const m::Report a = m::evaluate_corpus(ls, ptrs, kCats), b = m::evaluate_corpus(ls2, ptrs2, kCats);
  CHECK(*a.occ == doctest::Approx(*b.occ));
  CHECK(*a.ove == doctest::Approx(*b.ove));
  CHECK(*a.und_l == doctest::Approx(*b.und_l));
  CHECK(*a.und_s == doctest::Approx(*b.und_s));

  m::EvalSettings threaded;
  threaded.threads = 3;
  const m::Report c = m::evaluate_corpus(ls, ptrs, kCats, threaded);
  CHECK(c.occ == a.occ);
  CHECK(c.uti == a.uti);

  CHECK_THROWS_AS(m::evaluate_corpus(ls, std::span(ptrs).first(2), kCats), DomainError);

  const std::string csv = m::report_to_csv(a);
  CHECK(csv.rfind("id,occ,rea,ove,sma,uti,n_underlays,und_l", 0) == 0);
  CHECK(csv.find("\ncorpus,") != std::string::npos);
}

TEST_CASE("analytic metrics match the raster oracle on random layouts") {
  Rng rng(33);
  for (int i = 0; i < 10; ++i) {
    const Layout l = validation::random_layout(rng, kCats, 11);
    const SaliencyMap sal = validation::random_saliency(rng, rng.uniform_int(30, 90), rng.uniform_int(30, 90));
    CHECK(std::abs(m::ove(l, kCats) - m::pixel::ove(l, kCats, 512)) <= 1e-2);
    CHECK(std::abs(m::occ(l, sal, kCats) - m::pixel::occ(l, sal, kCats, 512)) <= 1e-2);
    const auto ua = m::underlay_ratios(l, kCats), up = m::pixel::underlay_ratios(l, kCats, 512);
    REQUIRE(ua.size() == up.size());
    for (std::size_t k = 0; k < ua.size(); ++k) CHECK(std::abs(ua[k] - up[k]) <= 1e-2);
  }
}

TEST_CASE("rigid shifts leave overlap and underlay scores unchanged") {
  Rng rng(8);
  for (int i = 0; i < 30; ++i) {
    Layout l;
    for (int k = 0; k < 5; ++k)
      l.elements.push_back({rng.uniform_int(1, 3), {rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), rng.uniform(0.05, 0.3),
                                                    rng.uniform(0.05, 0.3)}});
    Layout shifted = l;
    const double dx = rng.uniform(-0.1, 0.1), dy = rng.uniform(-0.1, 0.1);
    for (auto& e : shifted.elements) {
      e.box.x += dx;
      e.box.y += dy;
    }
    CHECK(m::ove(shifted, kCats) == doctest::Approx(m::ove(l, kCats)).epsilon(1e-9));
    const auto a = m::und(l, kCats), b = m::und(shifted, kCats);
    REQUIRE(a.loose.has_value() == b.loose.has_value());
    if (a.loose) CHECK(*b.loose == doctest::Approx(*a.loose).epsilon(1e-9));
  }
}

TEST_CASE("growing an underlay never lowers loose underlay coverage") {
  Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    Layout l = validation::random_layout(rng, kCats, 8);
    const auto before = m::und(l, kCats);
    if (!before.loose) continue;
    for (auto& e : l.elements)
      if (kCats.is_underlay(e.category)) {
        e.box.w *= 1.3;
        e.box.h *= 1.2;
      }
    const auto after = m::und(l, kCats);
    CHECK(*after.loose >= *before.loose - 1e-12);
  }
}

TEST_CASE("metric ranges on fuzzed inputs") {
  Rng rng(10);
  for (int i = 0; i < 40; ++i) {
    const Layout l = validation::random_layout(rng, kCats, 11);
    CanvasBundle b = bundle(48, 32, 0.0);
    b.saliency = validation::random_saliency(rng, 48, 32);
    for (auto& v : b.canvas.data) v = rng.uniform();
    const m::LayoutScores s = m::score_layout(l, b, kCats);
    for (const auto& v : {s.occ, s.ove, s.sma, s.uti})
      if (v) {
        CHECK(*v >= 0.0);
        CHECK(*v <= 1.0);
      }
    if (s.rea) CHECK(*s.rea >= 0.0);
    for (double r : s.underlay_ratios) {
      CHECK(r >= 0.0);
      CHECK(r <= 1.0);
    }
  }
}
