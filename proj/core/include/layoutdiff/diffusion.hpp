#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "layoutdiff/layout.hpp"
#include "layoutdiff/model.hpp"
#include "layoutdiff/rng.hpp"

namespace layoutdiff {

/// Linear beta schedule. Tables are indexed by step 0..T with the step-0
/// entries fixed to beta = 0, alpha_bar = 1.
struct NoiseSchedule {
  int steps = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;
  /// Per-step variance of the beta-variance sampler (sigma_t^2 = beta_t).
  std::vector<double> sigma2;

  double alpha_bar(int t) const { return alpha_bars.at(static_cast<std::size_t>(t)); }
};

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end);

/// pku/cgl: T = 1000, beta in [1e-4, 0.02]. desk: T = 200 with both ends
/// multiplied by 1000 / T so that alpha_bar_T stays near zero.
NoiseSchedule schedule_preset(std::string_view name);

enum class PlanMode { uniform, quad };
PlanMode parse_plan_mode(std::string_view name);
std::string_view plan_mode_name(PlanMode mode);

/// Strictly decreasing inference steps ending at 1.
struct TimestepPlan {
  std::vector<int> steps;
  PlanMode mode = PlanMode::uniform;
};

/// uniform: 1 + floor(i*T/n) for i < n, so the gap is constant when n divides T.
/// quad: integer gaps of round(((i/(n-1))^2)*(T-1)), sorted so they shrink
/// toward t = 1, zero gaps dropped; spans exactly [1, T].
TimestepPlan make_plan(const NoiseSchedule& sched, int n_steps, PlanMode mode);

/// sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps
Mat forward_sample(const Mat& x0, int t, const Mat& eps, const NoiseSchedule& sched);

/// Coefficients of q(x_to | x_from, x0) = N(coef_x0 * x0 + coef_xt * x_from, variance).
struct Posterior {
  double coef_x0 = 0.0;
  double coef_xt = 0.0;
  double variance = 0.0;
};
Posterior posterior(const NoiseSchedule& sched, int t_from, int t_to);

/// x0 estimate from a noise prediction, without clamping.
Mat predict_x0(const Mat& x_t, int t, const Mat& eps_hat, const NoiseSchedule& sched);

enum class VarianceKind { posterior, beta };

/// One reverse transition t_from -> t_to. The x0 estimate is clamped to
/// [-1, 1]; t_to == 0 returns it without sampling.
Mat reverse_step(const Mat& x_t, int t_from, int t_to, const Mat& eps_hat, const NoiseSchedule& sched, Rng& rng,
                 VarianceKind variance = VarianceKind::posterior);

enum class Task { uncond, c_to_sp, cs_to_p, completion, refine };
Task parse_task(std::string_view name);
std::string_view task_name(Task task);

/// Attributes frozen to a reference layout during sampling (1 = given).
struct ConstraintMask {
  Mat mask;
  LayoutTensor reference;
  /// Exact symbolic reference values per slot, used for the final overwrite.
  std::vector<LayoutElement> reference_rows;
};

ConstraintMask make_constraint(const Mat& mask, const Layout& reference, const CategorySet& cats, int n_max);

/// Mask for a constrained task. c_to_sp freezes every slot's category block,
/// cs_to_p additionally the width and height, completion freezes every
/// attribute of a random nonempty subset of the real elements (p = 0.5 each).
/// uncond/refine produce an all-zero mask.
ConstraintMask make_task_mask(Task task, const Layout& reference, const CategorySet& cats, int n_max, Rng& rng);

struct SampleResult {
  /// One decoded element per slot, empty slots included.
  std::vector<LayoutElement> rows;
  Layout layout;
};

/// Reverse diffusion over `plan` for a batch of conditions. `masks` is either
/// empty or holds one entry (possibly null) per sample.
std::vector<SampleResult> sample_batch(const Denoiser& model, std::span<const SampleCondition* const> conds,
                                       const TimestepPlan& plan, const NoiseSchedule& sched, const CategorySet& cats,
                                       std::span<const ConstraintMask* const> masks, Rng& rng);

SampleResult sample(const Denoiser& model, const SampleCondition& cond, const TimestepPlan& plan,
                    const NoiseSchedule& sched, const CategorySet& cats, const ConstraintMask* mask, Rng& rng);

/// Smallest t with 1 - abar_t >= 4 * variance (variance given in [0,1] box
/// units, the factor maps it to the [-1,1] diffusion space).
int refine_start_step(const NoiseSchedule& sched, double variance);

/// Adds N(0, variance) to every box coordinate of the nonempty elements.
Layout perturb_layout(const Layout& layout, double variance, Rng& rng);

/// Treats the noisy layouts as x_{t*} (scaled by sqrt(abar_{t*})) and runs
/// every reverse step from t* down to 0.
std::vector<SampleResult> refine_batch(const Denoiser& model, std::span<const SampleCondition* const> conds,
                                       std::span<const Layout> noisy, const NoiseSchedule& sched,
                                       const CategorySet& cats, Rng& rng, double variance = 0.01);

SampleResult refine(const Denoiser& model, const SampleCondition& cond, const Layout& noisy,
                    const NoiseSchedule& sched, const CategorySet& cats, Rng& rng, double variance = 0.01);

}  // namespace layoutdiff
