#include "layoutdiff/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "layoutdiff/error.hpp"

namespace layoutdiff {

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw DomainError("schedule needs at least one step");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw DomainError("beta range must satisfy 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.steps = steps;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  const auto n = static_cast<std::size_t>(steps) + 1;
  s.betas.assign(n, 0.0);
  s.alphas.assign(n, 1.0);
  s.alpha_bars.assign(n, 1.0);
  for (int t = 1; t <= steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / (steps - 1);
    const auto i = static_cast<std::size_t>(t);
    s.betas[i] = beta_start + (beta_end - beta_start) * frac;
    s.alphas[i] = 1.0 - s.betas[i];
    s.alpha_bars[i] = s.alpha_bars[i - 1] * s.alphas[i];
  }
  s.sigma2 = s.betas;
  return s;
}

NoiseSchedule schedule_preset(std::string_view name) {
  if (name == "pku" || name == "cgl") return make_schedule(1000, 1e-4, 0.02);
  if (name == "desk") return make_schedule(200, 5e-4, 0.1);
  throw ConfigError("unknown preset '" + std::string(name) + "' (expected desk, pku or cgl)");
}

PlanMode parse_plan_mode(std::string_view name) {
  if (name == "uniform") return PlanMode::uniform;
  if (name == "quad") return PlanMode::quad;
  throw DomainError("unknown plan mode '" + std::string(name) + "' (expected uniform or quad)");
}

std::string_view plan_mode_name(PlanMode mode) { return mode == PlanMode::uniform ? "uniform" : "quad"; }

TimestepPlan make_plan(const NoiseSchedule& sched, int n_steps, PlanMode mode) {
  const int T = sched.steps;
  if (n_steps < 1 || n_steps > T) throw DomainError("plan length must lie in [1, T]");
  TimestepPlan plan;
  plan.mode = mode;
  std::vector<int> ascending;
  if (mode == PlanMode::uniform || n_steps == 1) {
    for (int i = 0; i < n_steps; ++i)
      ascending.push_back(1 + static_cast<int>(static_cast<long long>(i) * T / n_steps));
  } else {
    std::vector<long long> marks;
    for (int i = 0; i < n_steps; ++i) {
      const double u = static_cast<double>(i) / (n_steps - 1);
      marks.push_back(std::llround(u * u * (T - 1)));
    }
    std::vector<int> gaps;
    for (std::size_t i = 1; i < marks.size(); ++i)
      if (marks[i] > marks[i - 1]) gaps.push_back(static_cast<int>(marks[i] - marks[i - 1]));
    std::sort(gaps.begin(), gaps.end());
    ascending.push_back(1);
    for (int g : gaps) ascending.push_back(ascending.back() + g);
  }
  plan.steps.assign(ascending.rbegin(), ascending.rend());
  return plan;
}

namespace {

void check_step(const NoiseSchedule& sched, int t, int lo) {
  if (t < lo || t > sched.steps)
    throw DomainError("timestep " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                      std::to_string(sched.steps) + "]");
}

Mat gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
  return m;
}

}  // namespace

Mat forward_sample(const Mat& x0, int t, const Mat& eps, const NoiseSchedule& sched) {
  check_step(sched, t, 1);
  if (x0.rows() != eps.rows() || x0.cols() != eps.cols()) throw DomainError("noise shape differs from x0");
  const double ab = sched.alpha_bar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

Posterior posterior(const NoiseSchedule& sched, int t_from, int t_to) {
  check_step(sched, t_from, 1);
  check_step(sched, t_to, 0);
  if (t_to >= t_from) throw DomainError("reverse step must go to an earlier timestep");
  const double ab_from = sched.alpha_bar(t_from);
  const double ab_to = sched.alpha_bar(t_to);
  const double alpha = ab_from / ab_to;
  const double beta = 1.0 - alpha;
  Posterior p;
  p.coef_x0 = std::sqrt(ab_to) * beta / (1.0 - ab_from);
  p.coef_xt = std::sqrt(alpha) * (1.0 - ab_to) / (1.0 - ab_from);
  p.variance = (1.0 - ab_to) / (1.0 - ab_from) * beta;
  return p;
}

Mat predict_x0(const Mat& x_t, int t, const Mat& eps_hat, const NoiseSchedule& sched) {
  check_step(sched, t, 1);
  const double ab = sched.alpha_bar(t);
  return (x_t - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab);
}

Mat reverse_step(const Mat& x_t, int t_from, int t_to, const Mat& eps_hat, const NoiseSchedule& sched, Rng& rng,
                 VarianceKind variance) {
  if (x_t.rows() != eps_hat.rows() || x_t.cols() != eps_hat.cols())
    throw DomainError("predicted noise shape differs from x_t");
  const Posterior p = posterior(sched, t_from, t_to);
  Mat x0 = predict_x0(x_t, t_from, eps_hat, sched).cwiseMax(-1.0).cwiseMin(1.0);
  if (t_to == 0) return x0;
  const double var = variance == VarianceKind::posterior ? p.variance : 1.0 - sched.alpha_bar(t_from) / sched.alpha_bar(t_to);
  Mat out = p.coef_x0 * x0 + p.coef_xt * x_t;
  out += std::sqrt(var) * gaussian(x_t.rows(), x_t.cols(), rng);
  return out;
}

Task parse_task(std::string_view name) {
  if (name == "uncond") return Task::uncond;
  if (name == "c_to_sp") return Task::c_to_sp;
  if (name == "cs_to_p") return Task::cs_to_p;
  if (name == "completion") return Task::completion;
  if (name == "refine") return Task::refine;
  throw DomainError("unknown task '" + std::string(name) + "'");
}

std::string_view task_name(Task task) {
  switch (task) {
    case Task::uncond: return "uncond";
    case Task::c_to_sp: return "c_to_sp";
    case Task::cs_to_p: return "cs_to_p";
    case Task::completion: return "completion";
    case Task::refine: return "refine";
  }
  return "?";
}

ConstraintMask make_constraint(const Mat& mask, const Layout& reference, const CategorySet& cats, int n_max) {
  ConstraintMask c;
  c.reference = tokenize(reference, cats, n_max);
  if (mask.rows() != c.reference.rows() || mask.cols() != c.reference.cols())
    throw ConfigError("constraint mask shape differs from the layout tensor");
  for (Eigen::Index i = 0; i < mask.size(); ++i)
    if (mask.data()[i] != 0.0 && mask.data()[i] != 1.0) throw DomainError("constraint mask must be 0/1");
  c.mask = mask;
  c.reference_rows.assign(static_cast<std::size_t>(n_max), LayoutElement{});
  for (std::size_t i = 0; i < reference.elements.size(); ++i) {
    const auto& el = reference.elements[i];
    c.reference_rows[i] = el.empty() ? LayoutElement{} : LayoutElement{el.category, clamp_box(el.box)};
  }
  return c;
}

ConstraintMask make_task_mask(Task task, const Layout& reference, const CategorySet& cats, int n_max, Rng& rng) {
  const int n_cat = cats.size();
  Mat mask = Mat::Zero(n_max, n_cat + 4);
  switch (task) {
    case Task::c_to_sp:
      mask.leftCols(n_cat).setOnes();
      break;
    case Task::cs_to_p:
      mask.leftCols(n_cat).setOnes();
      mask.col(n_cat + 2).setOnes();
      mask.col(n_cat + 3).setOnes();
      break;
    case Task::completion: {
      std::vector<int> real;
      for (std::size_t i = 0; i < reference.elements.size(); ++i)
        if (!reference.elements[i].empty()) real.push_back(static_cast<int>(i));
      std::vector<int> keep;
      for (int i : real)
        if (rng.uniform() < 0.5) keep.push_back(i);
      if (keep.empty() && !real.empty()) keep.push_back(real[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(real.size()) - 1))]);
      for (int i : keep) mask.row(i).setOnes();
      break;
    }
    case Task::uncond:
    case Task::refine:
      break;
  }
  return make_constraint(mask, reference, cats, n_max);
}

namespace {

// Category by argmax (lowest index on ties), box decoded for every nonempty row,
// then frozen attributes replaced by their exact reference values.
std::vector<LayoutElement> decode_with_overrides(const Mat& x, const CategorySet& cats, const ConstraintMask* mask) {
  std::vector<LayoutElement> rows = decode_rows(LayoutTensor{x}, cats);
  const int n_cat = cats.size();
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    auto& el = rows[static_cast<std::size_t>(r)];
    for (int k = 0; k < 4; ++k) el.box[k] = std::clamp(to_unit(x(r, n_cat + k)), 0.0, 1.0);
    if (mask) {
      const auto& ref = mask->reference_rows[static_cast<std::size_t>(r)];
      if (mask->mask.row(r).head(n_cat).minCoeff() == 1.0) el.category = ref.category;
      for (int k = 0; k < 4; ++k)
        if (mask->mask(r, n_cat + k) == 1.0) el.box[k] = ref.box[k];
    }
    if (el.empty()) el.box = Box{};
  }
  return rows;
}

SampleResult to_result(std::vector<LayoutElement> rows) {
  SampleResult res;
  for (const auto& el : rows)
    if (!el.empty()) res.layout.elements.push_back(el);
  res.rows = std::move(rows);
  return res;
}

}  // namespace

std::vector<SampleResult> sample_batch(const Denoiser& model, std::span<const SampleCondition* const> conds,
                                       const TimestepPlan& plan, const NoiseSchedule& sched, const CategorySet& cats,
                                       std::span<const ConstraintMask* const> masks, Rng& rng) {
  const auto& cfg = model.config();
  const int batch = static_cast<int>(conds.size());
  const int n = cfg.n_max;
  const int f = cfg.feature_dim();
  if (f != feature_dim(cats)) throw ConfigError("category set does not match the model");
  if (!masks.empty() && static_cast<int>(masks.size()) != batch) throw ConfigError("need one mask slot per sample");
  if (plan.steps.empty()) throw DomainError("empty timestep plan");
  for (const auto* m : masks)
    if (m && (m->mask.rows() != n || m->mask.cols() != f)) throw ConfigError("constraint mask shape mismatch");

  const Conditioning cond = Conditioning::stack(conds);
  Mat x = gaussian(static_cast<Eigen::Index>(batch) * n, f, rng);

  auto inject = [&](int t) {
    for (int b = 0; b < static_cast<int>(masks.size()); ++b) {
      const auto* m = masks[static_cast<std::size_t>(b)];
      if (!m) continue;
      auto block = x.middleRows(static_cast<Eigen::Index>(b) * n, n);
      const Mat frozen = t == 0 ? m->reference.values : forward_sample(m->reference.values, t, gaussian(n, f, rng), sched);
      block = (m->mask.array() == 1.0).select(frozen, block);
    }
  };

  std::vector<int> steps(static_cast<std::size_t>(batch));
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    const int t = plan.steps[i];
    const int t_to = i + 1 < plan.steps.size() ? plan.steps[i + 1] : 0;
    inject(t);
    std::fill(steps.begin(), steps.end(), t);
    const Mat eps_hat = model.predict_noise(x, steps, cond);
    x = reverse_step(x, t, t_to, eps_hat, sched, rng);
  }
  inject(0);

  std::vector<SampleResult> out;
  for (int b = 0; b < batch; ++b) {
    const ConstraintMask* m = masks.empty() ? nullptr : masks[static_cast<std::size_t>(b)];
    out.push_back(to_result(decode_with_overrides(x.middleRows(static_cast<Eigen::Index>(b) * n, n), cats, m)));
  }
  return out;
}

SampleResult sample(const Denoiser& model, const SampleCondition& cond, const TimestepPlan& plan,
                    const NoiseSchedule& sched, const CategorySet& cats, const ConstraintMask* mask, Rng& rng) {
  const SampleCondition* c[] = {&cond};
  const ConstraintMask* m[] = {mask};
  return std::move(sample_batch(model, c, plan, sched, cats, mask ? std::span<const ConstraintMask* const>(m)
                                                                  : std::span<const ConstraintMask* const>{},
                                rng)
                       .front());
}

int refine_start_step(const NoiseSchedule& sched, double variance) {
  const double target = 4.0 * variance;
  for (int t = 1; t <= sched.steps; ++t)
    if (1.0 - sched.alpha_bar(t) >= target) return t;
  return sched.steps;
}

Layout perturb_layout(const Layout& layout, double variance, Rng& rng) {
  Layout out = layout;
  const double sd = std::sqrt(variance);
  for (auto& el : out.elements) {
    if (el.empty()) continue;
    for (int k = 0; k < 4; ++k) el.box[k] += sd * rng.normal();
  }
  return out;
}

std::vector<SampleResult> refine_batch(const Denoiser& model, std::span<const SampleCondition* const> conds,
                                       std::span<const Layout> noisy, const NoiseSchedule& sched,
                                       const CategorySet& cats, Rng& rng, double variance) {
  const auto& cfg = model.config();
  const int batch = static_cast<int>(conds.size());
  if (static_cast<int>(noisy.size()) != batch) throw ConfigError("need one noisy layout per condition");
  const int n = cfg.n_max;
  const int start = refine_start_step(sched, variance);
  Mat x(static_cast<Eigen::Index>(batch) * n, cfg.feature_dim());
  for (int b = 0; b < batch; ++b)
    x.middleRows(static_cast<Eigen::Index>(b) * n, n) =
        std::sqrt(sched.alpha_bar(start)) * tokenize(canonicalize(noisy[static_cast<std::size_t>(b)]), cats, n).values;
  const Conditioning cond = Conditioning::stack(conds);
  std::vector<int> steps(static_cast<std::size_t>(batch));
  for (int t = start; t >= 1; --t) {
    std::fill(steps.begin(), steps.end(), t);
    const Mat eps_hat = model.predict_noise(x, steps, cond);
    x = reverse_step(x, t, t - 1, eps_hat, sched, rng);
  }
  std::vector<SampleResult> out;
  for (int b = 0; b < batch; ++b)
    out.push_back(to_result(decode_with_overrides(x.middleRows(static_cast<Eigen::Index>(b) * n, n), cats, nullptr)));
  return out;
}

SampleResult refine(const Denoiser& model, const SampleCondition& cond, const Layout& noisy,
                    const NoiseSchedule& sched, const CategorySet& cats, Rng& rng, double variance) {
  const SampleCondition* c[] = {&cond};
  return std::move(refine_batch(model, c, std::span<const Layout>(&noisy, 1), sched, cats, rng, variance).front());
}

}  // namespace layoutdiff
