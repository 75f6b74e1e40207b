#include "layoutdiff/validation/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "layoutdiff/data.hpp"
#include "layoutdiff/render.hpp"
#include "layoutdiff/training.hpp"

namespace layoutdiff::validation {

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

double mean(std::span<const double> v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

PipelineResult run_pipeline(const fs::path& dir, const PipelineConfig& cfg, const LogFn& log) {
  const auto t0 = std::chrono::steady_clock::now();
  auto say = [&](const std::string& m) {
    if (log) log(m);
  };
  PipelineResult r;
  const CategorySet cats = CategorySet::poster();
  const fs::path corpus = dir / "corpus";
  fs::remove_all(dir);

  say("generating " + std::to_string(cfg.n_samples) + " synthetic samples");
  const CorpusManifest manifest = generate_synthetic(corpus, cfg.n_samples, cfg.seed);

  const ModelConfig mc = model_preset("desk", cats.size());
  const NoiseSchedule sched = schedule_preset("desk");
  TrainConfig tc = train_preset("desk");
  tc.seed = cfg.seed;
  tc.val_every = 50;
  if (cfg.epochs > 0) tc.epochs = cfg.epochs;

  const auto train_set = load_split(corpus, manifest, Split::train, mc);
  const auto val_set = load_split(corpus, manifest, Split::val, mc);
  const auto test_set = load_split(corpus, manifest, Split::test, mc);

  Denoiser model(mc, cfg.seed);
  say("training " + std::to_string(tc.epochs) + " epochs on " + std::to_string(train_set.size()) + " samples");
  TrainOptions topts;
  topts.out_dir = dir / "run";
  topts.on_record = [&](const TrainRecord& rec) {
    if (rec.val_loss) say("epoch " + std::to_string(rec.epoch) + " step " + std::to_string(rec.step) + " val_loss " + fixed(*rec.val_loss));
  };
  const TrainResult tr = train(model, sched, cats, train_set, val_set, tc, topts);
  r.losses = tr.losses;
  const std::size_t head = std::min<std::size_t>(10, r.losses.size());
  const std::size_t tail = std::min<std::size_t>(100, r.losses.size());
  r.initial_loss = mean(std::span<const double>(r.losses).first(head));
  r.final_loss = mean(std::span<const double>(r.losses).last(tail));
  say("loss " + fixed(r.initial_loss) + " -> " + fixed(r.final_loss));

  std::vector<const PreparedSample*> pool;
  for (const auto& s : val_set) pool.push_back(&s);
  for (const auto& s : test_set) pool.push_back(&s);
  std::vector<const SampleCondition*> conds;
  std::vector<const CanvasBundle*> bundles;
  std::vector<Layout> truth;
  for (int i = 0; i < cfg.n_eval; ++i) {
    const auto* s = pool[static_cast<std::size_t>(i) % pool.size()];
    conds.push_back(&s->cond);
    bundles.push_back(&s->bundle);
    truth.push_back(s->layout);
  }

  say("sampling " + std::to_string(cfg.n_eval) + " layouts");
  Rng sample_rng(mix_seed(cfg.seed, 1));
  const TimestepPlan plan = make_plan(sched, cfg.plan_steps, cfg.plan);
  const auto samples = sample_batch(model, conds, plan, sched, cats, {}, sample_rng);
  std::vector<Layout> generated;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Layout l = samples[i].layout;
    l.canvas_h = bundles[i]->canvas.height;
    l.canvas_w = bundles[i]->canvas.width;
    char name[64];
    std::snprintf(name, sizeof name, "%02zu_%s.json", i, bundles[i]->id.c_str());
    write_file(dir / "samples" / name, layout_to_json(l, cats) + "\n");
    generated.push_back(std::move(l));
  }

  r.generated = metrics::evaluate_corpus(generated, bundles, cats);
  r.ground_truth = metrics::evaluate_corpus(truth, bundles, cats);
  write_file(dir / "report.json", metrics::report_to_json(r.generated) + "\n");
  write_file(dir / "report.csv", metrics::report_to_csv(r.generated));
  write_file(dir / "gt_report.json", metrics::report_to_json(r.ground_truth) + "\n");

  say("refining " + std::to_string(cfg.n_eval) + " perturbed ground truths");
  Rng refine_rng(mix_seed(cfg.seed, 2));
  std::vector<Layout> noisy;
  for (const auto& l : truth) noisy.push_back(perturb_layout(l, cfg.refine_variance, refine_rng));
  const auto refined = refine_batch(model, conds, noisy, sched, cats, refine_rng, cfg.refine_variance);
  nlohmann::json rj = nlohmann::json::array();
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const Mat gt = tokenize(canonicalize(truth[i]), cats, mc.n_max).values;
    const double d_noisy = (tokenize(canonicalize(noisy[i]), cats, mc.n_max).values - gt).norm();
    const double d_refined = (tokenize(canonicalize(refined[i].layout), cats, mc.n_max).values - gt).norm();
    r.refine_better += d_refined < d_noisy ? 1 : 0;
    rj.push_back({{"id", bundles[i]->id}, {"noisy_l2", d_noisy}, {"refined_l2", d_refined}});
  }
  r.refine_total = static_cast<int>(truth.size());
  write_file(dir / "refine.json", rj.dump(2) + "\n");

  for (int i = 0; i < std::min(cfg.renders, cfg.n_eval); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    char name[64];
    std::snprintf(name, sizeof name, "%02d_%s.png", i, bundles[idx]->id.c_str());
    fs::create_directories(dir / "renders");
    write_png(dir / "renders" / name, render(generated[idx], bundles[idx]->canvas, cats));
  }

  nlohmann::json summary{{"seed", cfg.seed},
                         {"steps", r.losses.size()},
                         {"initial_loss", r.initial_loss},
                         {"final_loss", r.final_loss},
                         {"refine_better", r.refine_better},
                         {"refine_total", r.refine_total}};
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::vector<fs::path> reproducible_outputs(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "train_log.jsonl") out.push_back(fs::relative(e.path(), dir));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace layoutdiff::validation
