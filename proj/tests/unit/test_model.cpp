#include <doctest.h>

#include <cstring>

#include "layoutdiff/error.hpp"
#include "layoutdiff/model.hpp"
#include "layoutdiff/validation/oracles.hpp"

using namespace layoutdiff;

namespace {

SampleCondition random_condition(const ModelConfig& cfg, Rng& rng, int boxes) {
  SampleCondition c;
  c.patches.resize(cfg.patch_count(), cfg.patch_dim());
  for (Eigen::Index i = 0; i < c.patches.size(); ++i) c.patches.data()[i] = rng.uniform(-1, 1);
  for (int k = 0; k < boxes; ++k) c.boxes.push_back({rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), 0.2, 0.1});
  return c;
}

Mat random_x(const ModelConfig& cfg, int batch, Rng& rng) {
  Mat x(batch * cfg.n_max, cfg.feature_dim());
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  return x;
}

}  // namespace

TEST_CASE("preset geometry") {
  CHECK(model_preset("pku", 4).patch_count() == 96);
  CHECK(model_preset("desk", 4).patch_count() == 24);
  CHECK_THROWS_AS(model_preset("tiny", 4), ConfigError);
  ModelConfig bad = model_preset("desk", 4);
  bad.n_heads = 5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("full-size parameter count is near 49M") {
  const Denoiser model(model_preset("pku", 4), 0);
  const double n = static_cast<double>(model.params().scalar_count());
  MESSAGE("full-size parameters: " << model.params().scalar_count());
  CHECK(n >= 0.8 * 49e6);
  CHECK(n <= 1.2 * 49e6);
}

TEST_CASE("shapes, finiteness and determinism") {
  const ModelConfig cfg = model_preset("desk", 4);
  const Denoiser model(cfg, 1);
  Rng rng(2);
  const SampleCondition a = random_condition(cfg, rng, 2), b = random_condition(cfg, rng, 0);
  const SampleCondition* ptrs[] = {&a, &b};
  const Conditioning cond = Conditioning::stack(ptrs);
  const Mat x = random_x(cfg, 2, rng);
  const std::vector<int> steps{5, 150};

  ag::Graph g(false);
  const FeatureBundle f = model.encode(g, x, steps, cond);
  CHECK(f.layout.rows() == 2 * cfg.n_max);
  CHECK(f.layout.cols() == cfg.d_model);
  CHECK(f.image.rows() == 2 * cfg.patch_count());
  CHECK(f.boxes.rows() == 3);
  CHECK(f.layout.value().allFinite());

  const Mat eps = model.predict_noise(x, steps, cond);
  CHECK(eps.rows() == x.rows());
  CHECK(eps.cols() == x.cols());
  CHECK(eps.allFinite());
  CHECK(eps == model.predict_noise(x, steps, cond));

  CHECK_THROWS_AS(model.predict_noise(x.topRows(cfg.n_max), steps, cond), ConfigError);
}

TEST_CASE("layout encoder is equivariant to slot permutations") {
  const ModelConfig cfg = model_preset("desk", 4);
  Denoiser model(cfg, 3);
  Rng rng(4);
  const Mat x = random_x(cfg, 1, rng);
  const std::vector<int> steps{40};
  const ag::Segments segs = ag::Segments::uniform(1, cfg.n_max);

  ag::Graph g(false);
  const Mat base = model.encode_layout(g, g.constant(x), model.timestep_embedding(g, steps), segs).value();

  Mat px = x;
  px.row(1).swap(px.row(4));
  Mat& pos = model.params().find("layout_enc.pos")->value;
  pos.row(1).swap(pos.row(4));
  ag::Graph h(false);
  const Mat perm = model.encode_layout(h, h.constant(px), model.timestep_embedding(h, steps), segs).value();

  Mat want = base;
  want.row(1).swap(want.row(4));
  CHECK((perm - want).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("image encoder sees the canvas channels") {
  const ModelConfig cfg = model_preset("desk", 4);
  const Denoiser model(cfg, 5);
  Image c1(cfg.img_h, cfg.img_w, 3, 0.2), c2(cfg.img_h, cfg.img_w, 3, 0.7);
  const SaliencyMap sal = SaliencyMap::constant(cfg.img_h, cfg.img_w, 0.3);
  const SampleCondition a = prepare_condition(c1, sal, {}, cfg), b = prepare_condition(c2, sal, {}, cfg);
  ag::Graph g(false);
  const Mat fa = model.encode_image(g, a.patches, 1).value();
  const Mat fb = model.encode_image(g, b.patches, 1).value();
  CHECK(fa.rows() == 24);
  CHECK((fa - fb).cwiseAbs().maxCoeff() > 1e-6);
  CHECK_THROWS_AS(prepare_condition(Image(10, 10, 3), SaliencyMap::constant(10, 10, 0), {}, cfg), ConfigError);
}

TEST_CASE("box encoder") {
  const ModelConfig cfg = model_preset("desk", 4);
  const Denoiser model(cfg, 6);
  SampleCondition none, dup;
  none.patches = dup.patches = Mat::Zero(cfg.patch_count(), cfg.patch_dim());
  dup.boxes = {{0.3, 0.4, 0.2, 0.1}, {0.3, 0.4, 0.2, 0.1}, {0.7, 0.2, 0.1, 0.3}};
  const SampleCondition* ptrs[] = {&none, &dup, &none};
  const Conditioning cond = Conditioning::stack(ptrs);
  ag::Graph g(false);
  ag::Segments segs;
  const Mat f = model.encode_boxes(g, cond, segs).value();
  REQUIRE(f.rows() == 5);
  CHECK(segs.size(0) == 1);
  CHECK(segs.size(1) == 3);
  CHECK(f.row(0) == f.row(4));
  CHECK(f.row(1) == f.row(2));
  CHECK(f.row(1) != f.row(3));
}

TEST_CASE("balance factor is one nonnegative scalar per sample") {
  const ModelConfig cfg = model_preset("desk", 4);
  Denoiser model(cfg, 7);
  Rng rng(8);
  model.params().find("cgbfp.head.bias")->value(0, 0) = -4.0;
  for (auto& p : model.params().all())
    if (p->name.rfind("cgbfp.head.weight", 0) == 0)
      for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = rng.normal();
  for (int boxes : {0, 1, 5}) {
    const SampleCondition a = random_condition(cfg, rng, boxes), b = random_condition(cfg, rng, 2);
    const SampleCondition* ptrs[] = {&a, &b};
    ag::Graph g(false);
    const auto out = model.forward(g, random_x(cfg, 2, rng), std::vector<int>{3, 90}, Conditioning::stack(ptrs));
    REQUIRE(out.omega.rows() == 2);
    REQUIRE(out.omega.cols() == 1);
    CHECK(out.omega.value().minCoeff() >= 0.0);
  }
}

TEST_CASE("omega = 0 removes the image branch exactly") {
  const ModelConfig cfg = validation::toy_config();
  Denoiser model(cfg, 9);
  Rng rng(10);
  for (auto& p : model.params().all())
    if (p->name.rfind("decoder.head.", 0) == 0)
      for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = rng.normal();
  const SampleCondition a = random_condition(cfg, rng, 1);
  const SampleCondition* ptrs[] = {&a};
  const Conditioning cond = Conditioning::stack(ptrs);
  ag::Graph g(false);
  const FeatureBundle f = model.encode(g, random_x(cfg, 1, rng), std::vector<int>{12}, cond);
  FeatureBundle noisy = f;
  Mat junk(f.image.rows(), f.image.cols());
  for (Eigen::Index i = 0; i < junk.size(); ++i) junk.data()[i] = rng.normal();
  noisy.image = g.constant(junk);
  const ag::Var zero = g.constant(Mat::Zero(1, 1)), one = g.constant(Mat::Ones(1, 1));
  const Mat a0 = model.decode(g, f, zero).value(), b0 = model.decode(g, noisy, zero).value();
  const Mat a1 = model.decode(g, f, one).value(), b1 = model.decode(g, noisy, one).value();
  CHECK(std::memcmp(a0.data(), b0.data(), sizeof(double) * static_cast<std::size_t>(a0.size())) == 0);
  CHECK(a1 != b1);
}

TEST_CASE("finite-difference gradients of the toy model") {
  const auto r = validation::gradient_check(validation::toy_config(), 13);
  for (const auto& [group, err] : r.group_error) {
    INFO(group);
    CHECK(err < 1e-4);
  }
  CHECK(r.group_error.count("cgbfp") == 1);
  CHECK(r.untouched.empty());
  CHECK(r.max_error < 1e-4);
}
