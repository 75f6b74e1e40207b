#include <benchmark/benchmark.h>

#include "layoutdiff/diffusion.hpp"
#include "layoutdiff/metrics.hpp"
#include "layoutdiff/model.hpp"
#include "layoutdiff/saliency.hpp"
#include "layoutdiff/validation/oracles.hpp"

using namespace layoutdiff;

namespace {

std::vector<SampleCondition> conditions(const ModelConfig& cfg, int batch, Rng& rng) {
  std::vector<SampleCondition> out(static_cast<std::size_t>(batch));
  for (auto& c : out) {
    c.patches.resize(cfg.patch_count(), cfg.patch_dim());
    for (Eigen::Index i = 0; i < c.patches.size(); ++i) c.patches.data()[i] = rng.uniform(-1, 1);
    c.boxes = {{0.5, 0.3, 0.6, 0.3}};
  }
  return out;
}

void BM_DeskForward(benchmark::State& state) {
  const ModelConfig cfg = model_preset("desk", 4);
  const Denoiser model(cfg, 1);
  Rng rng(2);
  const int batch = static_cast<int>(state.range(0));
  const auto conds = conditions(cfg, batch, rng);
  std::vector<const SampleCondition*> ptrs;
  for (const auto& c : conds) ptrs.push_back(&c);
  const Conditioning cond = Conditioning::stack(ptrs);
  Mat x = Mat::Random(batch * cfg.n_max, cfg.feature_dim());
  const std::vector<int> steps(static_cast<std::size_t>(batch), 100);
  for (auto _ : state) benchmark::DoNotOptimize(model.predict_noise(x, steps, cond));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_DeskForward)->Arg(1)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_DeskTrainStep(benchmark::State& state) {
  const ModelConfig cfg = model_preset("desk", 4);
  Denoiser model(cfg, 1);
  Rng rng(2);
  const auto conds = conditions(cfg, 32, rng);
  std::vector<const SampleCondition*> ptrs;
  for (const auto& c : conds) ptrs.push_back(&c);
  const Conditioning cond = Conditioning::stack(ptrs);
  const Mat x = Mat::Random(32 * cfg.n_max, cfg.feature_dim());
  const Mat target = Mat::Random(32 * cfg.n_max, cfg.feature_dim());
  const std::vector<int> steps(32, 100);
  for (auto _ : state) {
    ag::Graph g;
    const auto out = model.forward(g, x, steps, cond);
    const ag::Var l = ag::masked_mse(out.eps, target, Mat::Ones(target.rows(), target.cols()));
    model.params().zero_grad();
    g.backward(l);
    benchmark::DoNotOptimize(l.value());
  }
}
BENCHMARK(BM_DeskTrainStep)->Unit(benchmark::kMillisecond);

void BM_Sample25(benchmark::State& state) {
  const ModelConfig cfg = model_preset("desk", 4);
  const Denoiser model(cfg, 1);
  Rng rng(3);
  const auto conds = conditions(cfg, 64, rng);
  std::vector<const SampleCondition*> ptrs;
  for (const auto& c : conds) ptrs.push_back(&c);
  const NoiseSchedule sched = schedule_preset("desk");
  const TimestepPlan plan = make_plan(sched, 25, PlanMode::quad);
  const CategorySet cats = CategorySet::poster();
  for (auto _ : state) benchmark::DoNotOptimize(sample_batch(model, ptrs, plan, sched, cats, {}, rng));
}
BENCHMARK(BM_Sample25)->Unit(benchmark::kMillisecond);

struct MetricInputs {
  std::vector<Layout> layouts;
  std::vector<CanvasBundle> bundles;
  std::vector<const CanvasBundle*> ptrs;
};

MetricInputs metric_inputs(int n) {
  MetricInputs in;
  Rng rng(4);
  const CategorySet cats = CategorySet::poster();
  in.bundles.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    in.layouts.push_back(validation::random_layout(rng, cats, kDefaultMaxElements));
    auto& b = in.bundles[static_cast<std::size_t>(i)];
    b.saliency = validation::random_saliency(rng, 192, 128);
    b.canvas = Image(192, 128, 3, 0.5);
  }
  for (const auto& b : in.bundles) in.ptrs.push_back(&b);
  return in;
}

void BM_MetricsAnalytic(benchmark::State& state) {
  const MetricInputs in = metric_inputs(64);
  for (auto _ : state)
    benchmark::DoNotOptimize(metrics::evaluate_corpus(in.layouts, in.ptrs, CategorySet::poster()));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_MetricsAnalytic)->Unit(benchmark::kMillisecond);

void BM_MetricsPixel512(benchmark::State& state) {
  const MetricInputs in = metric_inputs(8);
  metrics::EvalSettings s;
  s.method = metrics::Method::pixel_grid;
  for (auto _ : state)
    benchmark::DoNotOptimize(metrics::evaluate_corpus(in.layouts, in.ptrs, CategorySet::poster(), s));
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_MetricsPixel512)->Unit(benchmark::kMillisecond);

void BM_ExtractBoxes(benchmark::State& state) {
  Rng rng(5);
  const BinaryMask mask = validation::random_blob_mask(rng, 384, 256, 8);
  for (auto _ : state) benchmark::DoNotOptimize(extract_boxes(mask, 8, 0.001));
}
BENCHMARK(BM_ExtractBoxes)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
