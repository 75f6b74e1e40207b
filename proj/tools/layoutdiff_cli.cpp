#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "layoutdiff/checkpoint.hpp"
#include "layoutdiff/data.hpp"
#include "layoutdiff/diffusion.hpp"
#include "layoutdiff/error.hpp"
#include "layoutdiff/metrics.hpp"
#include "layoutdiff/render.hpp"
#include "layoutdiff/training.hpp"
#include "layoutdiff/validation/acceptance.hpp"

namespace fs = std::filesystem;
using namespace layoutdiff;

namespace {

const std::map<std::string, std::string> kCategorySets{{"poster", "empty, logo, text, underlay"},
                                                       {"poster-embellishment", "adds embellishment"}};

CategorySet category_set(const std::string& name) {
  return name == "poster" ? CategorySet::poster() : CategorySet::poster_with_embellishment();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
}

fs::path checkpoint_file(const fs::path& p) { return fs::is_directory(p) ? p / "checkpoint.bin" : p; }

struct GenData {
  int n = 256;
  std::uint64_t seed = 7;
  fs::path out = "corpus";
  int height = 192, width = 128;

  void run() const {
    SyntheticSpec spec;
    spec.height = height;
    spec.width = width;
    const auto m = generate_synthetic(out, n, seed, spec);
    spdlog::info("wrote {} samples to {} (train {}, val {}, test {}, excluded {})", m.samples.size(), out.string(),
                 m.ids(Split::train).size(), m.ids(Split::val).size(), m.ids(Split::test).size(), m.excluded.size());
  }
};

struct Ingest {
  fs::path corpus;
  std::uint64_t seed = 0;
  int n_max = kDefaultMaxElements;
  std::string categories = "poster";

  void run() const {
    const auto m = ingest(corpus, category_set(categories), seed, n_max);
    for (const auto& e : m.excluded) spdlog::warn("excluded {}: {}", e.id, e.reason);
    spdlog::info("manifest: {} samples, {} excluded, hash {}", m.samples.size(), m.excluded.size(), m.config_hash);
  }
};

struct Train {
  fs::path corpus;
  std::string preset = "desk";
  std::string task = "uncond";
  std::optional<int> epochs, batch_size, save_every, val_every;
  std::optional<double> lr, grad_clip;
  std::optional<std::string> t_sampling;
  std::optional<bool> mirror;
  std::uint64_t seed = 0;
  fs::path out = "ckpt";
  bool resume = false;

  void run() const {
    const CorpusManifest manifest = read_manifest(corpus);
    const CategorySet& cats = manifest.categories;
    TrainConfig tc = train_preset(preset, parse_task(task));
    if (epochs) tc.epochs = *epochs;
    if (batch_size) tc.batch_size = *batch_size;
    if (lr) tc.learning_rate = *lr;
    if (grad_clip) tc.grad_clip = *grad_clip;
    if (t_sampling) tc.t_sampling = parse_plan_mode(*t_sampling);
    if (save_every) tc.save_every = *save_every;
    if (val_every) tc.val_every = *val_every;
    if (mirror) tc.mirror_augment = *mirror;
    tc.seed = seed;
    tc.validate();
    spdlog::info("resolved training: epochs={} batch-size={} lr={} grad-clip={} t-sampling={} task={} mirror={} seed={}",
                 tc.epochs, tc.batch_size, tc.learning_rate, tc.grad_clip, plan_mode_name(tc.t_sampling),
                 task_name(tc.task), tc.mirror_augment, tc.seed);

    const ModelConfig mc = model_preset(preset, cats.size());
    const NoiseSchedule sched = schedule_preset(preset);
    const auto train_set = load_split(corpus, manifest, Split::train, mc);
    const auto val_set = load_split(corpus, manifest, Split::val, mc);
    Denoiser model(mc, seed);
    spdlog::info("model: {} parameters, T = {}, {} train / {} val samples", model.params().scalar_count(),
                 sched.steps, train_set.size(), val_set.size());

    TrainOptions opts;
    opts.out_dir = out;
    opts.resume = resume;
    opts.on_record = [](const TrainRecord& r) {
      if (r.val_loss) spdlog::info("epoch {} step {} loss {:.5f} val {:.5f}", r.epoch, r.step, r.loss, *r.val_loss);
    };
    const TrainResult res = train(model, sched, cats, train_set, val_set, tc, opts);
    spdlog::info("done: {} steps, checkpoint {}", res.state.step, (out / "checkpoint.bin").string());
  }
};

struct Sample {
  fs::path ckpt, corpus;
  std::string split = "test";
  int n = 64;
  int steps = 25;
  std::string plan = "quad";
  std::string task = "uncond";
  double variance = 0.01;
  std::uint64_t seed = 0;
  fs::path out = "samples";

  void run() const {
    const Checkpoint ck = read_checkpoint(checkpoint_file(ckpt));
    const Denoiser model = restore_model(ck);
    const NoiseSchedule sched = ck.schedule();
    const CategorySet& cats = ck.categories;
    const CorpusManifest manifest = read_manifest(corpus);
    if (!(manifest.categories == cats)) throw ConfigError("corpus categories differ from the checkpoint's");
    const auto pool = load_split(corpus, manifest, parse_split(split), model.config());
    if (pool.empty()) throw ConfigError("split " + split + " is empty");

    const Task t = parse_task(task);
    Rng rng(seed);
    std::vector<const PreparedSample*> picked;
    std::vector<const SampleCondition*> conds;
    for (int i = 0; i < n; ++i) {
      picked.push_back(&pool[static_cast<std::size_t>(i) % pool.size()]);
      conds.push_back(&picked.back()->cond);
    }

    std::vector<SampleResult> results;
    if (t == Task::refine) {
      std::vector<Layout> noisy;
      for (const auto* s : picked) noisy.push_back(perturb_layout(s->layout, variance, rng));
      results = refine_batch(model, conds, noisy, sched, cats, rng, variance);
    } else {
      std::vector<ConstraintMask> masks;
      for (const auto* s : picked) masks.push_back(make_task_mask(t, s->layout, cats, model.config().n_max, rng));
      std::vector<const ConstraintMask*> mptrs;
      if (t != Task::uncond)
        for (const auto& m : masks) mptrs.push_back(&m);
      results = sample_batch(model, conds, make_plan(sched, steps, parse_plan_mode(plan)), sched, cats, mptrs, rng);
    }

    fs::create_directories(out);
    for (std::size_t i = 0; i < results.size(); ++i) {
      Layout l = results[i].layout;
      l.canvas_h = picked[i]->bundle.canvas.height;
      l.canvas_w = picked[i]->bundle.canvas.width;
      const std::string name = n > static_cast<int>(pool.size())
                                   ? picked[i]->id + "_" + std::to_string(i / pool.size())
                                   : picked[i]->id;
      write_layout(out / (name + ".json"), l, cats);
    }
    spdlog::info("wrote {} layouts to {}", results.size(), out.string());
  }
};

struct Eval {
  fs::path layouts, bundles;
  fs::path out = "report.json";
  std::optional<fs::path> csv;
  std::string oracle = "off";
  bool occ_non_underlay = false;
  std::string categories = "poster";
  int threads = 1;

  void run() const {
    CategorySet cats = category_set(categories);
    if (fs::exists(bundles / "manifest.json")) cats = read_manifest(bundles).categories;

    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(layouts))
      if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no layout files in " + layouts.string());

    std::vector<Layout> ls;
    std::vector<CanvasBundle> bs;
    std::map<std::string, std::size_t> loaded;
    std::vector<std::size_t> which;
    for (const auto& f : files) {
      ls.push_back(read_layout(f, cats));
      std::string id = f.stem().string();
      if (!fs::exists(bundles / "canvases" / (id + ".png")) && id.find('_') != std::string::npos)
        id = id.substr(0, id.rfind('_'));
      auto [it, fresh] = loaded.try_emplace(id, bs.size());
      if (fresh) bs.push_back(load_bundle(bundles, id));
      which.push_back(it->second);
    }
    std::vector<const CanvasBundle*> ptrs;
    for (auto i : which) ptrs.push_back(&bs[i]);

    metrics::EvalSettings settings;
    settings.threads = threads;
    settings.options.occ_non_underlay_only = occ_non_underlay;
    const metrics::Report report = metrics::evaluate_corpus(ls, ptrs, cats, settings);
    write_text(out, metrics::report_to_json(report) + "\n");
    if (csv) write_text(*csv, metrics::report_to_csv(report));

    auto show = [](const std::optional<double>& v) { return v ? fmt::format("{:.4f}", *v) : std::string("n/a"); };
    spdlog::info("Occ {} Rea {} Und_L {} Und_S {} Ove {} Sma {} Uti {}", show(report.occ), show(report.rea),
                 show(report.und_l), show(report.und_s), show(report.ove), show(report.sma), show(report.uti));

    if (oracle == "pixel512") {
      settings.method = metrics::Method::pixel_grid;
      settings.grid = 512;
      const metrics::Report px = metrics::evaluate_corpus(ls, ptrs, cats, settings);
      double worst = 0.0;
      for (auto [a, b] : {std::pair{report.und_l, px.und_l}, std::pair{report.und_s, px.und_s},
                          std::pair{report.ove, px.ove}, std::pair{report.occ, px.occ}, std::pair{report.uti, px.uti}})
        if (a.has_value() != b.has_value())
          worst = 1.0;
        else if (a)
          worst = std::max(worst, std::abs(*a - *b));
      fs::path px_path = out;
      px_path.replace_extension(".pixel512.json");
      write_text(px_path, metrics::report_to_json(px) + "\n");
      spdlog::info("pixel512 oracle: max corpus |analytic - raster| = {:.2e} ({})", worst,
                   worst <= 1e-2 ? "agrees" : "DISAGREES");
      if (worst > 1e-2) throw NumericError("analytic metrics disagree with the pixel oracle");
    }
  }
};

struct ExtractBoxes {
  fs::path saliency;
  BoxExtractionParams params;
  fs::path out = "boxes.json";

  void run() const {
    const SalientBoxSet set = extract_boxes(SaliencyMap::load(saliency), params);
    write_text(out, boxes_to_json(set) + "\n");
    spdlog::info("{} salient boxes", set.boxes.size());
  }
};

struct Render {
  fs::path layout, canvas;
  fs::path out = "render.png";
  std::string categories = "poster";
  RenderStyle style;

  void run() const {
    const CategorySet cats = category_set(categories);
    const Image img = read_png(canvas, 3);
    write_png(out, render(canonicalize(read_layout(layout, cats)), img, cats, style));
  }
};

struct Accept {
  std::uint64_t seed = 7;
  fs::path out = "acceptance_out";

  int run() const {
    validation::AcceptanceOptions opts;
    opts.seed = seed;
    opts.work_dir = out;
    opts.log = [](const std::string& m) { spdlog::info("{}", m); };
    const auto results = validation::run_acceptance(opts);
    const std::string table = validation::format_table(results);
    std::cout << table << std::flush;
    write_text(out / "acceptance.txt", table);
    for (const auto& r : results)
      if (!r.pass) return 1;
    return 0;
  }
};

/// Flat key=value lines from the subcommand's --config file become flags,
/// unless the same flag is already on the command line.
std::vector<std::string> with_config_file(const CLI::App& app, std::vector<std::string> args) {
  auto sub = std::find_if(args.begin(), args.end(), [&](const std::string& a) {
    return !a.starts_with("-") && app.get_subcommand_no_throw(a) != nullptr;
  });
  if (sub == args.end()) return args;
  std::optional<std::string> path;
  for (auto it = sub; it != args.end(); ++it) {
    if (*it == "--config" && it + 1 != args.end()) path = *(it + 1);
    if (it->starts_with("--config=")) path = it->substr(9);
  }
  if (!path) return args;
  std::ifstream in(*path);
  if (!in) throw CLI::FileError::Missing(*path);
  auto given = [&](const std::string& key) {
    return std::any_of(sub, args.end(),
                       [&](const std::string& a) { return a == "--" + key || a.starts_with("--" + key + "="); });
  };
  std::vector<std::string> extra;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    const auto trim = [](std::string v) {
      v.erase(0, v.find_first_not_of(" \t\r"));
      v.erase(v.find_last_not_of(" \t\r") + 1);
      if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
      return v;
    };
    if (trim(line).empty()) continue;
    if (eq == std::string::npos) throw CLI::ConversionError("config line without '=': " + line);
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key == "config" || given(key)) continue;
    extra.push_back("--" + key + "=" + value);
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("layoutdiff");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");

  CLI::App app{"Content-aware layout generation with diffusion: data, training, sampling, evaluation."};
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level = "info";
  int threads = 0;
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error"}));
  app.add_option("--threads", threads, "Worker threads (0 = hardware concurrency)")
      ->envname("LAYOUTDIFF_THREADS")
      ->check(CLI::NonNegativeNumber);
  const auto category_check = CLI::IsMember(kCategorySets);

  auto with_config = [](CLI::App* sub) {
    sub->set_config("--config", "", "Flat key=value file; keys are long flag names");
    return sub;
  };
  auto out_option = [](CLI::App* sub, fs::path& target, const std::string& help) {
    sub->add_option("--out", target, help)->envname("LAYOUTDIFF_OUT")->capture_default_str();
  };

  GenData gen;
  auto* s_gen = with_config(app.add_subcommand("gen-data", "Write a synthetic poster corpus and its manifest"));
  s_gen->add_option("--n", gen.n, "Number of samples")->check(CLI::PositiveNumber)->capture_default_str();
  s_gen->add_option("--seed", gen.seed, "Generator and split seed")->capture_default_str();
  s_gen->add_option("--height", gen.height, "Canvas height in pixels")->check(CLI::Range(32, 4096))->capture_default_str();
  s_gen->add_option("--width", gen.width, "Canvas width in pixels")->check(CLI::Range(32, 4096))->capture_default_str();
  out_option(s_gen, gen.out, "Corpus directory");

  Ingest ing;
  auto* s_ing = with_config(app.add_subcommand("ingest", "Validate a corpus directory and write its 8:1:1 manifest"));
  s_ing->add_option("--corpus", ing.corpus, "Corpus directory")->required();
  s_ing->add_option("--seed", ing.seed, "Split seed")->capture_default_str();
  s_ing->add_option("--n-max", ing.n_max, "Maximum elements per layout")->check(CLI::PositiveNumber)->capture_default_str();
  s_ing->add_option("--categories", ing.categories, "Category set")->check(category_check)->capture_default_str();

  Train tr;
  auto* s_tr = with_config(app.add_subcommand("train", "Train a denoiser on a corpus"));
  s_tr->add_option("--corpus", tr.corpus, "Ingested corpus directory")->required();
  s_tr->add_option("--preset", tr.preset, "Model, schedule and optimizer preset")
      ->check(CLI::IsMember({"desk", "pku", "cgl"}))
      ->capture_default_str();
  s_tr->add_option("--task", tr.task, "Training task")
      ->check(CLI::IsMember({"uncond", "c_to_sp", "cs_to_p", "completion"}))
      ->capture_default_str();
  s_tr->add_option("--epochs", tr.epochs, "Epochs (default: preset)")->check(CLI::PositiveNumber);
  s_tr->add_option("--batch-size", tr.batch_size, "Batch size (default: preset)")->check(CLI::PositiveNumber);
  s_tr->add_option("--lr", tr.lr, "Learning rate (default: preset)")->check(CLI::PositiveNumber);
  s_tr->add_option("--grad-clip", tr.grad_clip, "Global gradient-norm clip (default: preset)")
      ->check(CLI::PositiveNumber);
  s_tr->add_option("--t-sampling", tr.t_sampling, "Training step distribution (default: preset)")
      ->check(CLI::IsMember({"uniform", "quad"}));
  s_tr->add_option("--save-every", tr.save_every, "Checkpoint interval in epochs (0 = final only)")
      ->check(CLI::NonNegativeNumber);
  s_tr->add_option("--val-every", tr.val_every, "Validation interval in epochs (0 = off)")
      ->check(CLI::NonNegativeNumber);
  s_tr->add_option("--mirror", tr.mirror, "Mirror augmentation (default: preset)");
  s_tr->add_option("--seed", tr.seed, "Initialization and data-order seed")->capture_default_str();
  s_tr->add_flag("--resume", tr.resume, "Continue from <out>/checkpoint.bin");
  out_option(s_tr, tr.out, "Run directory (checkpoint.bin, train_log.jsonl)");

  Sample sm;
  auto* s_sm = with_config(app.add_subcommand("sample", "Generate layouts for corpus canvases"));
  s_sm->add_option("--ckpt", sm.ckpt, "Checkpoint file or run directory")->required();
  s_sm->add_option("--corpus", sm.corpus, "Corpus supplying canvases and reference layouts")
      ->required();
  s_sm->add_option("--split", sm.split, "Corpus split")->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();
  s_sm->add_option("--n", sm.n, "Number of layouts (canvases are reused round-robin)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  s_sm->add_option("--steps", sm.steps, "Reverse steps in the plan")->check(CLI::PositiveNumber)->capture_default_str();
  s_sm->add_option("--plan", sm.plan, "Step plan")->check(CLI::IsMember({"uniform", "quad"}))->capture_default_str();
  s_sm->add_option("--task", sm.task, "Generation task")
      ->check(CLI::IsMember({"uncond", "c_to_sp", "cs_to_p", "completion", "refine"}))
      ->capture_default_str();
  s_sm->add_option("--variance", sm.variance, "Perturbation variance for refine")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  s_sm->add_option("--seed", sm.seed, "Sampling seed")->capture_default_str();
  out_option(s_sm, sm.out, "Directory receiving <id>.json layouts");

  Eval ev;
  auto* s_ev = with_config(app.add_subcommand("eval", "Score layouts against their canvases"));
  s_ev->add_option("--layouts", ev.layouts, "Directory of <id>.json layouts")->required();
  s_ev->add_option("--bundles", ev.bundles, "Corpus directory with canvases/ and saliency/")
      ->required();
  s_ev->add_option("--oracle", ev.oracle, "Cross-check against the 512x512 raster oracle")
      ->check(CLI::IsMember({"off", "pixel512"}))
      ->capture_default_str();
  s_ev->add_option("--csv", ev.csv, "Also write a per-layout CSV table");
  s_ev->add_flag("--occ-non-underlay", ev.occ_non_underlay, "Occlusion over non-underlay elements only");
  s_ev->add_option("--categories", ev.categories, "Category set when the bundles have no manifest")
      ->check(category_check)
      ->capture_default_str();
  out_option(s_ev, ev.out, "Report JSON path");

  ExtractBoxes ex;
  auto* s_ex = with_config(app.add_subcommand("extract-boxes", "Salient-region boxes of an 8-bit saliency map"));
  s_ex->add_option("--saliency", ex.saliency, "Saliency PNG")->required();
  s_ex->add_option("--threshold", ex.params.threshold, "Binarization threshold")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  s_ex->add_option("--k-max", ex.params.k_max, "Maximum number of boxes")->check(CLI::PositiveNumber)->capture_default_str();
  s_ex->add_option("--min-area", ex.params.min_area, "Minimum component area (canvas fraction)")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  out_option(s_ex, ex.out, "Boxes JSON path");

  Render rd;
  auto* s_rd = with_config(app.add_subcommand("render", "Draw a layout over its canvas"));
  s_rd->add_option("--layout", rd.layout, "Layout JSON")->required();
  s_rd->add_option("--canvas", rd.canvas, "Canvas PNG")->required();
  s_rd->add_option("--alpha", rd.style.alpha, "Fill opacity")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  s_rd->add_option("--outline", rd.style.outline, "Outline width in pixels")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  s_rd->add_option("--categories", rd.categories, "Category set")->check(category_check)->capture_default_str();
  out_option(s_rd, rd.out, "Output PNG");

  Accept ac;
  auto* s_ac = with_config(app.add_subcommand("accept", "Run every acceptance check at desk scale and print a table"));
  s_ac->add_option("--seed", ac.seed, "Seed for every randomized check")->capture_default_str();
  out_option(s_ac, ac.out, "Scratch directory");

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = with_config_file(app, args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  spdlog::set_level(spdlog::level::from_str(log_level));
  if (threads == 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  Eigen::setNbThreads(threads);
  ev.threads = threads;

  std::string resolved = "threads=" + std::to_string(threads) + "\n";
  for (const auto* sub : app.get_subcommands()) resolved += sub->config_to_str(true, false);
  for (std::size_t pos = 0; (pos = resolved.find('\n', pos)) != std::string::npos; resolved.replace(pos, 1, "; "))
    ;
  spdlog::info("resolved config: {}", resolved);

  try {
    if (*s_gen) gen.run();
    if (*s_ing) ing.run();
    if (*s_tr) tr.run();
    if (*s_sm) sm.run();
    if (*s_ev) ev.run();
    if (*s_ex) ex.run();
    if (*s_rd) rd.run();
    if (*s_ac) return ac.run();
  } catch (const CapacityError& e) {
    spdlog::error("capacity error: {}", e.what());
    return 1;
  } catch (const DomainError& e) {
    spdlog::error("domain error: {}", e.what());
    return 1;
  } catch (const NumericError& e) {
    spdlog::error("numeric error: {}", e.what());
    return 1;
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return 1;
  } catch (const IoError& e) {
    spdlog::error("io error: {}", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("error: {}", e.what());
    return 1;
  }
  return 0;
}
