#include <doctest.h>

#include <cmath>

#include "layoutdiff/diffusion.hpp"
#include "layoutdiff/error.hpp"
#include "layoutdiff/training.hpp"
#include "layoutdiff/validation/oracles.hpp"

using namespace layoutdiff;

namespace {

SampleCondition random_condition(const ModelConfig& cfg, Rng& rng) {
  SampleCondition c;
  c.patches.resize(cfg.patch_count(), cfg.patch_dim());
  for (Eigen::Index i = 0; i < c.patches.size(); ++i) c.patches.data()[i] = rng.uniform(-1, 1);
  c.boxes = {{0.5, 0.3, 0.4, 0.2}};
  return c;
}

void randomize_head(Denoiser& model, Rng& rng) {
  for (auto& p : model.params().all())
    if (p->name.rfind("decoder.head.", 0) == 0)
      for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = 0.3 * rng.normal();
}

Layout reference_layout() {
  Layout l;
  l.elements = {{1, {0.2, 0.1, 0.15, 0.08}}, {2, {0.5, 0.7, 0.5, 0.1}}, {3, {0.5, 0.7, 0.6, 0.16}}};
  return l;
}

}  // namespace

TEST_CASE("alpha_bar is the running product of 1 - beta") {
  const NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
  double prod = 1.0;
  for (int t = 1; t <= 1000; ++t) {
    const double beta = 1e-4 + (0.02 - 1e-4) * (t - 1) / 999.0;
    prod *= 1.0 - beta;
    CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
  }
  CHECK(std::abs(s.alpha_bar(1000) - prod) <= 1e-10 * prod);
  CHECK(make_schedule(1, 0.3, 0.3).alpha_bar(1) == doctest::Approx(0.7));
  CHECK_THROWS_AS(make_schedule(10, 0.0, 0.02), DomainError);
}

TEST_CASE("forward_sample limits and marginal moments") {
  const NoiseSchedule s = schedule_preset("pku");
  const Mat x0 = Mat::Constant(2, 3, 0.4);
  CHECK(forward_sample(x0, 10, Mat::Zero(2, 3), s).isApprox(std::sqrt(s.alpha_bar(10)) * x0));
  const Mat eps = Mat::Constant(2, 3, -0.7);
  CHECK((forward_sample(x0, 1000, eps, s) - eps).cwiseAbs().maxCoeff() < 0.01);

  Rng rng(4);
  const int n = 10000;
  for (int t : {1, 500, 1000}) {
    Mat e(n, 1);
    for (int i = 0; i < n; ++i) e(i, 0) = rng.normal();
    const Mat x = forward_sample(Mat::Constant(n, 1, 0.6), t, e, s);
    const double ab = s.alpha_bar(t), m = x.mean();
    const double v = (x.array() - m).square().sum() / (n - 1);
    CHECK(std::abs(m - std::sqrt(ab) * 0.6) <= 3 * std::sqrt((1 - ab) / n));
    CHECK(std::abs(v - (1 - ab)) <= 3 * (1 - ab) * std::sqrt(2.0 / (n - 1)));
  }
}

TEST_CASE("posterior coefficients on a three-step schedule") {
  const NoiseSchedule s = make_schedule(3, 0.1, 0.3);
  const Posterior a = posterior(s, 2, 1);
  CHECK(a.coef_x0 == doctest::Approx(0.6776309271789385).epsilon(1e-12));
  CHECK(a.coef_xt == doctest::Approx(0.3194382824999699).epsilon(1e-12));
  CHECK(a.variance == doctest::Approx(0.07142857142857144).epsilon(1e-12));
  const Posterior b = posterior(s, 3, 2);
  CHECK(b.coef_x0 == doctest::Approx(0.5132226637644296).epsilon(1e-12));
  CHECK(b.coef_xt == doctest::Approx(0.47230807949504267).epsilon(1e-12));
  CHECK(b.variance == doctest::Approx(0.16935483870967744).epsilon(1e-12));
  CHECK_THROWS_AS(posterior(s, 1, 2), DomainError);
}

TEST_CASE("noise inversion and the terminal step") {
  const NoiseSchedule s = schedule_preset("desk");
  Rng rng(8);
  Mat x0(5, 8), eps(5, 8);
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    x0.data()[i] = rng.uniform(-1, 1);
    eps.data()[i] = rng.normal();
  }
  for (int t : {1, 50, 200}) {
    const Mat xt = forward_sample(x0, t, eps, s);
    CHECK((predict_x0(xt, t, eps, s) - x0).cwiseAbs().maxCoeff() <= 1e-6);
    Rng a(1), b(2);
    const Mat out = reverse_step(xt, t, 0, eps, s, a);
    CHECK(out == reverse_step(xt, t, 0, eps, s, b));
    CHECK((out - x0).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("timestep plans") {
  const NoiseSchedule s = schedule_preset("pku");
  const TimestepPlan u = make_plan(s, 25, PlanMode::uniform);
  REQUIRE(u.steps.size() == 25);
  for (std::size_t i = 0; i < 25; ++i) CHECK(u.steps[24 - i] == 1 + static_cast<int>(i) * 40);

  const TimestepPlan full = make_plan(make_schedule(20, 1e-3, 0.2), 20, PlanMode::uniform);
  for (int i = 0; i < 20; ++i) CHECK(full.steps[static_cast<std::size_t>(i)] == 20 - i);

  for (int n : {5, 25, 50, 100}) {
    const TimestepPlan q = make_plan(s, n, PlanMode::quad);
    CHECK(q.steps.front() == 1000);
    CHECK(q.steps.back() == 1);
    for (std::size_t i = 2; i < q.steps.size(); ++i)
      CHECK(q.steps[i - 1] - q.steps[i] <= q.steps[i - 2] - q.steps[i - 1]);
  }
  CHECK_THROWS_AS(make_plan(s, 0, PlanMode::uniform), DomainError);
}

TEST_CASE("refine start step scans the alpha_bar table") {
  for (const auto& s : {schedule_preset("pku"), schedule_preset("desk")}) {
    int want = 0;
    for (int t = 1; t <= s.steps; ++t)
      if (1.0 - s.alpha_bar(t) >= 0.04) {
        want = t;
        break;
      }
    CHECK(refine_start_step(s, 0.01) == want);
  }
}

TEST_CASE("task masks freeze the documented attributes") {
  const CategorySet cats = CategorySet::poster();
  const Layout ref = reference_layout();
  Rng rng(1);
  const int nc = cats.size();
  const ConstraintMask c = make_task_mask(Task::c_to_sp, ref, cats, 11, rng);
  CHECK(c.mask.leftCols(nc).minCoeff() == 1.0);
  CHECK(c.mask.rightCols(4).maxCoeff() == 0.0);
  const ConstraintMask cs = make_task_mask(Task::cs_to_p, ref, cats, 11, rng);
  CHECK(cs.mask.rightCols(2).minCoeff() == 1.0);
  CHECK(cs.mask.middleCols(nc, 2).maxCoeff() == 0.0);
  for (int trial = 0; trial < 20; ++trial) {
    const ConstraintMask m = make_task_mask(Task::completion, ref, cats, 11, rng);
    int frozen = 0;
    for (int r = 0; r < 11; ++r) {
      const double lo = m.mask.row(r).minCoeff(), hi = m.mask.row(r).maxCoeff();
      CHECK(lo == hi);
      if (r >= 3) CHECK(hi == 0.0);
      frozen += hi == 1.0;
    }
    CHECK(frozen >= 1);
  }
  CHECK(make_task_mask(Task::uncond, ref, cats, 11, rng).mask.maxCoeff() == 0.0);
}

TEST_CASE("masked sampling keeps frozen attributes bit for bit") {
  const CategorySet cats = CategorySet::poster();
  ModelConfig cfg = validation::toy_config();
  cfg.n_max = 4;
  Denoiser model(cfg, 3);
  Rng rng(9);
  randomize_head(model, rng);
  const NoiseSchedule s = schedule_preset("desk");
  const TimestepPlan plan = make_plan(s, 10, PlanMode::quad);
  const SampleCondition cond = random_condition(cfg, rng);
  const Layout ref = reference_layout();

  const ConstraintMask all = make_constraint(Mat::Ones(4, cfg.feature_dim()), ref, cats, 4);
  CHECK(sample(model, cond, plan, s, cats, &all, rng).layout.elements == canonicalize(ref).elements);

  for (Task task : {Task::c_to_sp, Task::cs_to_p, Task::completion}) {
    for (int trial = 0; trial < 5; ++trial) {
      const ConstraintMask m = make_task_mask(task, ref, cats, 4, rng);
      const SampleResult out = sample(model, cond, plan, s, cats, &m, rng);
      for (int r = 0; r < 4; ++r) {
        const auto& got = out.rows[static_cast<std::size_t>(r)];
        const auto& want = m.reference_rows[static_cast<std::size_t>(r)];
        if (m.mask.row(r).head(cats.size()).minCoeff() == 1.0) CHECK(got.category == want.category);
        for (int k = 0; k < 4; ++k)
          if (m.mask(r, cats.size() + k) == 1.0) CHECK(got.box[k] == want.box[k]);
      }
    }
  }

  const SampleResult free = sample(model, cond, plan, s, cats, nullptr, rng);
  CHECK(canonicalize(free.layout) == free.layout);
  CHECK(free.layout.size() <= 4);
}

TEST_CASE("sampling is deterministic for a seed") {
  ModelConfig cfg = validation::toy_config();
  Denoiser model(cfg, 5);
  Rng init(1);
  randomize_head(model, init);
  const SampleCondition cond = random_condition(cfg, init);
  const NoiseSchedule s = schedule_preset("desk");
  const TimestepPlan plan = make_plan(s, 8, PlanMode::uniform);
  Rng a(42), b(42);
  const auto x = sample(model, cond, plan, s, CategorySet::poster(), nullptr, a);
  const auto y = sample(model, cond, plan, s, CategorySet::poster(), nullptr, b);
  CHECK(x.rows == y.rows);
}

TEST_CASE("perturb_layout only moves real elements") {
  Rng rng(3);
  const Layout ref = reference_layout();
  const Layout p = perturb_layout(ref, 0.01, rng);
  REQUIRE(p.size() == ref.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(p.elements[i].category == ref.elements[i].category);
    CHECK(!(p.elements[i].box == ref.elements[i].box));
  }
}

TEST_CASE("training step distribution") {
  Rng rng(17);
  const int n = 100000, T = 1000;
  int low = 0;
  for (int i = 0; i < n; ++i) {
    const int t = sample_timestep(T, PlanMode::quad, rng);
    REQUIRE(t >= 1);
    REQUIRE(t <= T);
    low += t <= T / 4;
  }
  CHECK(std::abs(static_cast<double>(low) / n - 0.5) <= 3 * std::sqrt(0.25 / n));
  for (int i = 0; i < 100; ++i) CHECK(sample_timestep(1, PlanMode::uniform, rng) == 1);
}
