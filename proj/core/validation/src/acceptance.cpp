#include "layoutdiff/validation/acceptance.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "layoutdiff/data.hpp"
#include "layoutdiff/diffusion.hpp"
#include "layoutdiff/error.hpp"
#include "layoutdiff/metrics.hpp"
#include "layoutdiff/validation/oracles.hpp"

namespace layoutdiff::validation {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

bool bitwise_equal(const Mat& a, const Mat& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void randomize_head(Denoiser& model, Rng& rng) {
  for (auto& p : model.params().all())
    if (p->name.rfind("decoder.head.", 0) == 0)
      for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = 0.1 * rng.normal();
}

CriterionResult metric_oracle(std::uint64_t seed) {
  const auto t0 = Clock::now();
  CriterionResult c{1, "Metric oracle equivalence", false, "", 0.0};
  const CategorySet cats = CategorySet::poster();
  Rng rng(mix_seed(seed, 101));
  std::vector<Layout> layouts;
  std::vector<CanvasBundle> bundles(100);
  std::vector<const CanvasBundle*> ptrs;
  for (int i = 0; i < 100; ++i) {
    layouts.push_back(random_layout(rng, cats, kDefaultMaxElements));
    const int h = rng.uniform_int(48, 160), w = rng.uniform_int(48, 160);
    bundles[static_cast<std::size_t>(i)].id = "rand_" + std::to_string(i);
    bundles[static_cast<std::size_t>(i)].saliency = random_saliency(rng, h, w);
    bundles[static_cast<std::size_t>(i)].canvas = Image(h, w, 3, 0.5);
    ptrs.push_back(&bundles[static_cast<std::size_t>(i)]);
  }
  metrics::EvalSettings pixel;
  pixel.method = metrics::Method::pixel_grid;
  pixel.grid = 512;
  const auto a = metrics::evaluate_corpus(layouts, ptrs, cats);
  const auto b = metrics::evaluate_corpus(layouts, ptrs, cats, pixel);

  bool ok = true;
  std::string detail;
  auto cmp = [&](const char* name, const std::optional<double>& x, const std::optional<double>& y) {
    const bool both = x.has_value() && y.has_value();
    const double d = both ? std::abs(*x - *y) : 1.0;
    ok = ok && both && d <= 1e-2;
    detail += std::string(detail.empty() ? "" : ", ") + name + " |d|=" + num(d, 2);
  };
  cmp("und_l", a.und_l, b.und_l);
  cmp("und_s", a.und_s, b.und_s);
  cmp("ove", a.ove, b.ove);
  cmp("occ", a.occ, b.occ);
  cmp("uti", a.uti, b.uti);
  c.seconds = seconds_since(t0);
  c.pass = ok && c.seconds < 120.0;
  c.detail = detail + " (tol 1e-2, " + std::to_string(a.n_underlays) + " underlays)";
  return c;
}

CriterionResult diffusion_math(std::uint64_t seed) {
  const auto t0 = Clock::now();
  CriterionResult c{2, "Diffusion math", false, "", 0.0};
  bool ok = true;
  int failed_moments = 0;
  double worst_inversion = 0.0;
  Rng rng(mix_seed(seed, 202));
  constexpr int N = 10000;
  const double x0v = 0.6;

  for (const auto& sched : {schedule_preset("pku"), schedule_preset("desk")}) {
    const int T = sched.steps;
    for (int t = 1; t <= T; ++t) ok = ok && sched.alpha_bar(t) < sched.alpha_bar(t - 1);

    auto moments_ok = [&](const Mat& x, int t) {
      const double ab = sched.alpha_bar(t);
      const double m = x.mean();
      const double v = (x.array() - m).square().sum() / (N - 1);
      const bool mean_ok = std::abs(m - std::sqrt(ab) * x0v) <= 3.0 * std::sqrt((1.0 - ab) / N);
      const bool var_ok = std::abs(v - (1.0 - ab)) <= 3.0 * (1.0 - ab) * std::sqrt(2.0 / (N - 1));
      return mean_ok && var_ok;
    };

    for (int t : {1, T / 2, T}) {
      Mat eps(N, 1);
      for (int i = 0; i < N; ++i) eps(i, 0) = rng.normal();
      const Mat closed = forward_sample(Mat::Constant(N, 1, x0v), t, eps, sched);
      if (!moments_ok(closed, t)) ++failed_moments;

      Mat x = Mat::Constant(N, 1, x0v);
      for (int s = 1; s <= t; ++s) {
        const double a = sched.alphas[static_cast<std::size_t>(s)];
        for (int i = 0; i < N; ++i) x(i, 0) = std::sqrt(a) * x(i, 0) + std::sqrt(1.0 - a) * rng.normal();
      }
      if (!moments_ok(x, t)) ++failed_moments;
    }

    Mat x0(11, 8), eps(11, 8);
    for (Eigen::Index i = 0; i < x0.size(); ++i) {
      x0.data()[i] = rng.uniform(-1, 1);
      eps.data()[i] = rng.normal();
    }
    for (int t = 1; t <= T; ++t) {
      const Mat back = predict_x0(forward_sample(x0, t, eps, sched), t, eps, sched);
      worst_inversion = std::max(worst_inversion, (back - x0).cwiseAbs().maxCoeff());
    }
  }
  c.seconds = seconds_since(t0);
  c.pass = ok && failed_moments == 0 && worst_inversion <= 1e-6 && c.seconds < 60.0;
  c.detail = std::string("alpha_bar ") + (ok ? "strictly decreasing" : "NOT decreasing") + ", moment checks failed " +
             std::to_string(failed_moments) + "/12 (3 sigma), inversion error " + num(worst_inversion, 2) +
             " (tol 1e-6)";
  return c;
}

CriterionResult gradients(std::uint64_t seed) {
  const auto t0 = Clock::now();
  CriterionResult c{3, "Gradient correctness", false, "", 0.0};
  const auto g = gradient_check(toy_config(), seed);
  c.seconds = seconds_since(t0);
  c.pass = g.max_error < 1e-4 && g.untouched.empty() && c.seconds < 120.0;
  std::string groups;
  for (const auto& [name, err] : g.group_error) groups += (groups.empty() ? "" : ", ") + name + " " + num(err, 2);
  c.detail = "max rel err " + num(g.max_error, 2) + " over " + std::to_string(g.probes) + " scalars (" + groups +
             "), zero-gradient tensors " + std::to_string(g.untouched.size());
  return c;
}

CriterionResult omega_ablation(std::uint64_t seed) {
  const auto t0 = Clock::now();
  CriterionResult c{4, "Omega-ablation invariance", false, "", 0.0};
  const ModelConfig mc = model_preset("desk", 4);
  Denoiser model(mc, seed);
  Rng rng(mix_seed(seed, 404));
  randomize_head(model, rng);

  const int batch = 2;
  std::vector<SampleCondition> conds(batch);
  for (auto& s : conds) {
    s.patches.resize(mc.patch_count(), mc.patch_dim());
    for (Eigen::Index i = 0; i < s.patches.size(); ++i) s.patches.data()[i] = rng.uniform(-1, 1);
    s.boxes = {{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), 0.2, 0.3}};
  }
  const SampleCondition* ptrs[] = {&conds[0], &conds[1]};
  const Conditioning cond = Conditioning::stack(ptrs);
  Mat x(batch * mc.n_max, mc.feature_dim());
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  const std::vector<int> steps{40, 120};

  ag::Graph g(false);
  const FeatureBundle f = model.encode(g, x, steps, cond);
  FeatureBundle noisy = f;
  Mat junk(f.image.rows(), f.image.cols());
  for (Eigen::Index i = 0; i < junk.size(); ++i) junk.data()[i] = 3.0 * rng.normal();
  noisy.image = g.constant(junk);

  const ag::Var zero = g.constant(Mat::Zero(batch, 1));
  const ag::Var some = g.constant(Mat::Constant(batch, 1, 0.7));
  const Mat base0 = model.decode(g, f, zero).value();
  const Mat noisy0 = model.decode(g, noisy, zero).value();
  const Mat base1 = model.decode(g, f, some).value();
  const Mat noisy1 = model.decode(g, noisy, some).value();
  const bool invariant = bitwise_equal(base0, noisy0);
  const double moved = (base1 - noisy1).cwiseAbs().maxCoeff();
  c.seconds = seconds_since(t0);
  c.pass = invariant && moved > 0.0;
  c.detail = std::string("omega=0: ") + (invariant ? "bitwise identical" : "CHANGED") +
             "; omega=0.7: max |diff| " + num(moved, 3);
  return c;
}

CriterionResult constrained(const fs::path& work, std::uint64_t seed) {
  const auto t0 = Clock::now();
  CriterionResult c{5, "Constrained exactness", false, "", 0.0};
  const fs::path corpus = work / "constrained_corpus";
  fs::remove_all(corpus);
  const CorpusManifest manifest = generate_synthetic(corpus, 50, mix_seed(seed, 505));
  const CategorySet& cats = manifest.categories;
  const ModelConfig mc = model_preset("desk", cats.size());
  const NoiseSchedule sched = schedule_preset("desk");
  std::vector<PreparedSample> samples;
  for (const auto& e : manifest.samples) samples.push_back(load_sample(corpus, e.id, cats, mc));

  Denoiser model(mc, seed);
  Rng rng(mix_seed(seed, 506));
  randomize_head(model, rng);
  const TimestepPlan plan = make_plan(sched, 25, PlanMode::quad);
  const int n_cat = cats.size();

  std::string detail;
  bool ok = true;
  for (Task task : {Task::c_to_sp, Task::cs_to_p, Task::completion}) {
    std::vector<ConstraintMask> masks;
    std::vector<const ConstraintMask*> mptrs;
    std::vector<const SampleCondition*> conds;
    for (const auto& s : samples) masks.push_back(make_task_mask(task, s.layout, cats, mc.n_max, rng));
    for (std::size_t i = 0; i < samples.size(); ++i) {
      mptrs.push_back(&masks[i]);
      conds.push_back(&samples[i].cond);
    }
    const auto out = sample_batch(model, conds, plan, sched, cats, mptrs, rng);
    long checked = 0, mismatched = 0;
    for (std::size_t i = 0; i < out.size(); ++i)
      for (int r = 0; r < mc.n_max; ++r) {
        const auto& m = masks[i].mask;
        const auto& got = out[i].rows[static_cast<std::size_t>(r)];
        const auto& want = masks[i].reference_rows[static_cast<std::size_t>(r)];
        if (m.row(r).head(n_cat).minCoeff() == 1.0) {
          ++checked;
          mismatched += got.category != want.category;
        }
        for (int k = 0; k < 4; ++k)
          if (m(r, n_cat + k) == 1.0) {
            ++checked;
            mismatched += std::bit_cast<std::uint64_t>(got.box[k]) != std::bit_cast<std::uint64_t>(want.box[k]);
          }
      }
    ok = ok && mismatched == 0 && checked > 0;
    detail += std::string(detail.empty() ? "" : ", ") + std::string(task_name(task)) + " " +
              std::to_string(checked - mismatched) + "/" + std::to_string(checked);
  }
  c.seconds = seconds_since(t0);
  c.pass = ok;
  c.detail = detail + " frozen attributes exact over " + std::to_string(samples.size()) + " samples";
  return c;
}

CriterionResult end_to_end(const PipelineResult* p, const std::string& error) {
  CriterionResult c{6, "End-to-end synthetic experiment", false, "", 0.0};
  if (!p) {
    c.detail = "pipeline failed: " + error;
    return c;
  }
  const double ratio = p->final_loss / p->initial_loss;
  const auto v = [](const std::optional<double>& o) { return o.value_or(std::nan("")); };
  const double und_s = v(p->generated.und_s), ove = v(p->generated.ove), sma = v(p->generated.sma);
  const double occ = v(p->generated.occ), occ_gt = v(p->ground_truth.occ);
  c.seconds = p->seconds;
  c.pass = ratio < 0.25 && und_s >= 0.85 && ove <= 0.05 && sma <= 0.02 && occ <= 1.5 * occ_gt && p->seconds <= 1200.0;
  c.detail = "loss ratio " + num(ratio, 3) + " (<0.25), Und_S " + num(und_s, 3) + " (>=0.85), Ove " + num(ove, 3) +
             " (<=0.05), Sma " + num(sma, 3) + " (<=0.02), Occ " + num(occ, 3) + " (<=1.5 x GT " + num(occ_gt, 3) +
             ")";
  return c;
}

CriterionResult refinement(const PipelineResult* p, const std::string& error) {
  CriterionResult c{7, "Refinement", false, "", 0.0};
  if (!p) {
    c.detail = "pipeline failed: " + error;
    return c;
  }
  c.pass = p->refine_total > 0 && p->refine_better >= 0.8 * p->refine_total;
  c.detail = std::to_string(p->refine_better) + "/" + std::to_string(p->refine_total) +
             " refined layouts closer to ground truth (need >= 80%)";
  return c;
}

CriterionResult saliency_boxes(std::uint64_t seed) {
  const auto t0 = Clock::now();
  CriterionResult c{8, "Saliency boxes", false, "", 0.0};
  Rng rng(mix_seed(seed, 808));
  int equal = 0;
  constexpr int kMasks = 200;
  for (int i = 0; i < kMasks; ++i) {
    const int h = rng.uniform_int(16, 96), w = rng.uniform_int(16, 96);
    const BinaryMask mask = random_blob_mask(rng, h, w, rng.uniform_int(2, 8));
    const bool loose = i % 2 == 1;
    const int k_max = loose ? 1000 : 8;
    const double min_area = loose ? 0.0 : 0.001;
    equal += extract_boxes(mask, k_max, min_area) == reference_boxes(mask, k_max, min_area) ? 1 : 0;
  }
  c.seconds = seconds_since(t0);
  c.pass = equal == kMasks;
  c.detail = std::to_string(equal) + "/" + std::to_string(kMasks) + " masks match the label-propagation oracle exactly";
  return c;
}

CriterionResult determinism(const fs::path& a, const fs::path& b, bool both_ran) {
  CriterionResult c{9, "Determinism", false, "", 0.0};
  if (!both_ran) {
    c.detail = "pipeline did not complete twice";
    return c;
  }
  const auto fa = reproducible_outputs(a), fb = reproducible_outputs(b);
  int differing = 0;
  for (const auto& rel : fa) {
    if (!fs::exists(b / rel) || read_bytes(a / rel) != read_bytes(b / rel)) ++differing;
  }
  bool same_list = fa == fb;
  c.pass = same_list && differing == 0 && !fa.empty();
  c.detail = std::to_string(fa.size() - static_cast<std::size_t>(differing)) + "/" + std::to_string(fa.size()) +
             " outputs bitwise identical across two runs (reports, checkpoint, samples, renders, corpus)" +
             (same_list ? "" : "; file lists differ");
  return c;
}

}  // namespace

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& opts) {
  auto say = [&](const std::string& m) {
    if (opts.log) opts.log(m);
  };
  fs::create_directories(opts.work_dir);
  std::vector<CriterionResult> out;
  auto guarded = [&](int id, const char* name, auto&& fn) {
    say("criterion " + std::to_string(id) + ": " + name);
    try {
      out.push_back(fn());
    } catch (const std::exception& e) {
      out.push_back({id, name, false, std::string("error: ") + e.what(), 0.0});
    }
  };

  guarded(1, "Metric oracle equivalence", [&] { return metric_oracle(opts.seed); });
  guarded(2, "Diffusion math", [&] { return diffusion_math(opts.seed); });
  guarded(3, "Gradient correctness", [&] { return gradients(opts.seed); });
  guarded(4, "Omega-ablation invariance", [&] { return omega_ablation(opts.seed); });
  guarded(5, "Constrained exactness", [&] { return constrained(opts.work_dir, opts.seed); });

  PipelineConfig pc;
  pc.seed = opts.seed;
  std::optional<PipelineResult> first;
  std::string error;
  bool second_ok = false;
  try {
    say("pipeline run A");
    first = run_pipeline(opts.work_dir / "run_a", pc, opts.log);
    say("pipeline run B");
    run_pipeline(opts.work_dir / "run_b", pc, opts.log);
    second_ok = true;
  } catch (const std::exception& e) {
    error = e.what();
  }
  out.push_back(end_to_end(first ? &*first : nullptr, error));
  out.push_back(refinement(first ? &*first : nullptr, error));
  guarded(8, "Saliency boxes", [&] { return saliency_boxes(opts.seed); });
  out.push_back(determinism(opts.work_dir / "run_a", opts.work_dir / "run_b", first.has_value() && second_ok));
  return out;
}

std::string format_table(const std::vector<CriterionResult>& results) {
  std::string s;
  for (const auto& r : results)
    s += std::string(r.pass ? "[PASS] " : "[FAIL] ") + std::to_string(r.id) + ". " + r.name + ": " + r.detail + "\n";
  return s;
}

}  // namespace layoutdiff::validation
